/**
 * Logic Creator documents: the ".mynxt.json" program file.
 *
 * `serializeProgram` is canonical -- fixed key order, no whitespace -- and
 * byte-identical to the service's own serializer, so a file saved here
 * loads anywhere in the stack and golden-file comparisons are stable.
 */

export type StepOp = "forward" | "backward" | "spin_left" | "spin_right" | "pause" | "tone";

export interface ProgramStep {
  op: StepOp;
  ms: number;
  power?: number;
  hz?: number;
}

export interface ProgramFile {
  version: 1;
  name: string;
  steps: ProgramStep[];
}

export const MAX_STEPS = 64;
export const MAX_STEP_MS = 60000;
export const MAX_NAME_CHARS = 64;
export const DEFAULT_POWER = 75;
export const PROGRAM_SUFFIX = ".mynxt.json";

export const STEP_OPS: StepOp[] = ["forward", "backward", "spin_left", "spin_right", "pause", "tone"];
export const MOTION_OPS: StepOp[] = ["forward", "backward", "spin_left", "spin_right"];

export class ProgramError extends Error {}

const isInt = (v: unknown): v is number => typeof v === "number" && Number.isInteger(v);

/** Validate one step; returns a normalized copy or throws with the bound shown. */
export function checkStep(step: ProgramStep): ProgramStep {
  if (!STEP_OPS.includes(step.op)) throw new ProgramError(`unknown op '${step.op}'`);
  if (!isInt(step.ms) || step.ms < 1 || step.ms > MAX_STEP_MS)
    throw new ProgramError(`duration must be 1..${MAX_STEP_MS} ms`);
  const isMotion = MOTION_OPS.includes(step.op);
  if (isMotion) {
    const power = step.power ?? DEFAULT_POWER;
    if (!isInt(power) || power < 1 || power > 100)
      throw new ProgramError("power must be 1..100");
    if (step.hz !== undefined) throw new ProgramError(`'${step.op}' carries no frequency`);
    return { op: step.op, ms: step.ms, power };
  }
  if (step.op === "tone") {
    if (step.power !== undefined) throw new ProgramError("'tone' carries no power");
    if (!isInt(step.hz) || step.hz < 200 || step.hz > 14000)
      throw new ProgramError("frequency must be 200..14000 Hz");
    return { op: step.op, ms: step.ms, hz: step.hz };
  }
  if (step.power !== undefined || step.hz !== undefined)
    throw new ProgramError("'pause' carries no power or frequency");
  return { op: step.op, ms: step.ms };
}

export function emptyProgram(name = "My Program"): ProgramFile {
  return { version: 1, name, steps: [] };
}

export function appendStep(program: ProgramFile, step: ProgramStep): ProgramFile {
  if (program.steps.length >= MAX_STEPS)
    throw new ProgramError(`a program holds at most ${MAX_STEPS} steps`);
  return { ...program, steps: [...program.steps, checkStep(step)] };
}

export function removeStep(program: ProgramFile, index: number): ProgramFile {
  if (index < 0 || index >= program.steps.length) throw new ProgramError("no such step");
  return { ...program, steps: program.steps.filter((_, i) => i !== index) };
}

export function moveStep(program: ProgramFile, from: number, to: number): ProgramFile {
  const n = program.steps.length;
  if (from < 0 || from >= n || to < 0 || to >= n) throw new ProgramError("no such step");
  const steps = [...program.steps];
  const [step] = steps.splice(from, 1);
  steps.splice(to, 0, step);
  return { ...program, steps };
}

/** Canonical text form, byte-identical to the service's serializer. */
export function serializeProgram(program: ProgramFile): string {
  const steps = program.steps.map((raw) => {
    const step = checkStep(raw);
    const out: Record<string, unknown> = { op: step.op, ms: step.ms };
    if (step.power !== undefined) out.power = step.power;
    if (step.hz !== undefined) out.hz = step.hz;
    return out;
  });
  return JSON.stringify({ version: 1, name: program.name, steps });
}

export function parseProgram(text: string): ProgramFile {
  let v: unknown;
  try {
    v = JSON.parse(text);
  } catch (e) {
    throw new ProgramError(`not valid JSON: ${(e as Error).message}`);
  }
  if (typeof v !== "object" || v === null || Array.isArray(v))
    throw new ProgramError("program must be a JSON object");
  const obj = v as Record<string, unknown>;
  if (obj.version !== 1) throw new ProgramError("unsupported format version");
  if (typeof obj.name !== "string") throw new ProgramError("missing program name");
  if (obj.name.length > MAX_NAME_CHARS)
    throw new ProgramError(`name exceeds ${MAX_NAME_CHARS} characters`);
  if (!Array.isArray(obj.steps)) throw new ProgramError("missing steps list");
  if (obj.steps.length > MAX_STEPS)
    throw new ProgramError(`a program holds at most ${MAX_STEPS} steps`);
  const steps = obj.steps.map((raw, i) => {
    if (typeof raw !== "object" || raw === null) throw new ProgramError(`step ${i} must be an object`);
    const keys = Object.keys(raw);
    const allowed = ["op", "ms", "power", "hz"];
    for (const key of keys) {
      if (!allowed.includes(key)) throw new ProgramError(`step ${i}: unexpected field '${key}'`);
    }
    try {
      return checkStep(raw as ProgramStep);
    } catch (e) {
      throw new ProgramError(`step ${i}: ${(e as Error).message}`);
    }
  });
  return { version: 1, name: obj.name, steps };
}

/** Short per-step label for the program list. */
export function stepLabel(step: ProgramStep): string {
  const names: Record<StepOp, string> = {
    forward: "Forward",
    backward: "Backward",
    spin_left: "Spin Left",
    spin_right: "Spin Right",
    pause: "Pause",
    tone: "Tone",
  };
  const bits = [names[step.op], `${step.ms} ms`];
  if (step.power !== undefined) bits.push(`power ${step.power}`);
  if (step.hz !== undefined) bits.push(`${step.hz} Hz`);
  return bits.join(" · ");
}

export function suggestedFileName(program: ProgramFile): string {
  const base = program.name.trim().toLowerCase().replace(/[^a-z0-9]+/g, "-") || "program";
  return `${base}${PROGRAM_SUFFIX}`;
}
