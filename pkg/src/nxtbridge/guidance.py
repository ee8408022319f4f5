"""The instruction label: one line of guidance for every console state.

Every control screen carries a label that tells the user the next required
action; its text is a pure, total function of (screen, link state, run
status), so identical inputs always render identical text and the whole
table can be frozen as a golden file.  Wording is normative English; swap
the constants below for a message catalog to localize.
"""

from __future__ import annotations

from enum import Enum

from .link import LinkPhase, LinkState
from .logic import RunPhase, RunStatus


class Screen(Enum):
    HOME = "home"
    SPEECH = "speech"
    TILT = "tilt"
    ARROWS = "arrows"
    LOGIC_CREATOR = "logic_creator"


CONNECTING_TEXT = "Connecting to the robot..."
CONNECT_PROMPT = "Press CONNECT to connect to the robot"
FAULTED_TEXT = "Connection failed. Check the robot and press CONNECT to try again."

HOME_DISCONNECTED = "Choose a control mode to get started"
HOME_CONNECTED = "Connected. Choose a control mode."
HOME_FAULTED = "Connection failed. Open a control screen and press CONNECT to retry."

SPEECH_READY = "Press the Microphone to Give Commands"
TILT_READY = "Tilt your device to drive the robot"
ARROWS_READY = "Use the arrow keys to drive the robot"

LOGIC_READY = "Build your program, then press RUN"
LOGIC_FINISHED = "Program finished. Press RUN to run it again."
LOGIC_CANCELLED = "Program cancelled. Press RUN to run it again."
LOGIC_FAILED = "Program failed. Check the robot and press RUN to try again."

_READY_BY_SCREEN = {
    Screen.HOME: HOME_CONNECTED,
    Screen.SPEECH: SPEECH_READY,
    Screen.TILT: TILT_READY,
    Screen.ARROWS: ARROWS_READY,
}


def guidance_for(screen: Screen, link: LinkState, run: RunStatus) -> str:
    """Deterministic table lookup; never returns an empty string."""
    if link.phase is LinkPhase.CONNECTING:
        return CONNECTING_TEXT
    if link.phase is LinkPhase.FAULTED:
        return HOME_FAULTED if screen is Screen.HOME else FAULTED_TEXT
    if link.phase is LinkPhase.DISCONNECTED:
        return HOME_DISCONNECTED if screen is Screen.HOME else CONNECT_PROMPT

    if screen is Screen.LOGIC_CREATOR:
        if run.phase is RunPhase.RUNNING:
            return f"Running step {run.step_index + 1}"
        if run.phase is RunPhase.FINISHED:
            return LOGIC_FINISHED
        if run.phase is RunPhase.CANCELLED:
            return LOGIC_CANCELLED
        if run.phase is RunPhase.FAILED:
            return LOGIC_FAILED
        return LOGIC_READY
    return _READY_BY_SCREEN[screen]
