"""Render simulator trace files to figures.

A trace is the simulator's delimited export (``t_s,x,y,theta,power_l,
power_r`` per line); the figure pairs the driven path in the plane with
the wheel-power timeline, which is usually all you need to eyeball a
program run or a teleop session.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simbrick import TRACE_HEADER, TraceRow


def read_trace(path: Union[str, Path]) -> list[TraceRow]:
    """Parse a trace file; raises ValueError on a bad header or row."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"not a trace file (expected header {TRACE_HEADER!r})")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            rows.append(
                TraceRow(
                    t_s=float(parts[0]),
                    x_m=float(parts[1]),
                    y_m=float(parts[2]),
                    theta_rad=float(parts[3]),
                    power_l=int(parts[4]),
                    power_r=int(parts[5]),
                )
            )
        except ValueError:
            raise ValueError(f"line {lineno}: malformed trace row {line!r}") from None
    return rows


def render_trace(rows: Sequence[TraceRow], out_path: Union[str, Path]) -> Path:
    """Draw path and wheel powers side by side and save the figure."""
    if not rows:
        raise ValueError("trace holds no rows")
    out_path = Path(out_path)

    fig, (ax_path, ax_power) = plt.subplots(1, 2, figsize=(10, 4))

    xs = [r.x_m for r in rows]
    ys = [r.y_m for r in rows]
    ax_path.plot(xs, ys, "-", lw=1.5)
    ax_path.plot(xs[0], ys[0], "go", label="start")
    ax_path.plot(xs[-1], ys[-1], "rs", label="end")
    ax_path.set_xlabel("x [m]")
    ax_path.set_ylabel("y [m]")
    ax_path.set_title("path")
    ax_path.axis("equal")
    ax_path.legend(loc="best")

    ts = [r.t_s for r in rows]
    ax_power.step(ts, [r.power_l for r in rows], where="post", label="left")
    ax_power.step(ts, [r.power_r for r in rows], where="post", label="right")
    ax_power.set_xlabel("t [s]")
    ax_power.set_ylabel("power [%]")
    ax_power.set_ylim(-110, 110)
    ax_power.set_title("wheel power")
    ax_power.legend(loc="best")

    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_trace_file(trace_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    return render_trace(read_trace(trace_path), out_path)
