import { describe, expect, it } from "vitest";

import {
  MAX_STEPS,
  ProgramError,
  appendStep,
  emptyProgram,
  moveStep,
  parseProgram,
  removeStep,
  serializeProgram,
  stepLabel,
  suggestedFileName,
} from "../src/program.js";

// Canonical output of the service's serializer for this exact program;
// saving from the console must be byte-identical.
const GOLDEN =
  '{"version":1,"name":"My Program","steps":[' +
  '{"op":"forward","ms":1000,"power":75},' +
  '{"op":"spin_left","ms":500,"power":75}]}';

describe("canonical serialization", () => {
  it("matches the service's golden output byte for byte", () => {
    let program = emptyProgram("My Program");
    program = appendStep(program, { op: "forward", ms: 1000, power: 75 });
    program = appendStep(program, { op: "spin_left", ms: 500, power: 75 });
    expect(serializeProgram(program)).toBe(GOLDEN);
  });

  it("defaults motion power to 75 like the service", () => {
    const program = appendStep(emptyProgram("My Program"), { op: "forward", ms: 1000 });
    expect(serializeProgram(program)).toContain('"power":75');
  });

  it("roundtrips through parse", () => {
    const program = parseProgram(GOLDEN);
    expect(serializeProgram(program)).toBe(GOLDEN);
  });

  it("serializes pause and tone with exactly their fields", () => {
    let program = emptyProgram("mix");
    program = appendStep(program, { op: "pause", ms: 250 });
    program = appendStep(program, { op: "tone", ms: 500, hz: 440 });
    expect(serializeProgram(program)).toBe(
      '{"version":1,"name":"mix","steps":[{"op":"pause","ms":250},{"op":"tone","ms":500,"hz":440}]}',
    );
  });
});

describe("validation shows the bound", () => {
  it("rejects zero duration", () => {
    expect(() => appendStep(emptyProgram(), { op: "forward", ms: 0 })).toThrow(/1\.\.60000/);
  });

  it("rejects out-of-range power", () => {
    expect(() => appendStep(emptyProgram(), { op: "forward", ms: 10, power: 0 })).toThrow(
      /1\.\.100/,
    );
  });

  it("rejects out-of-range tone frequency", () => {
    expect(() => appendStep(emptyProgram(), { op: "tone", ms: 10, hz: 20 })).toThrow(
      /200\.\.14000/,
    );
  });

  it("rejects fractional milliseconds", () => {
    expect(() => appendStep(emptyProgram(), { op: "pause", ms: 10.5 })).toThrow(ProgramError);
  });

  it("rejects a 65th step", () => {
    let program = emptyProgram();
    for (let i = 0; i < MAX_STEPS; i++) program = appendStep(program, { op: "pause", ms: 1 });
    expect(() => appendStep(program, { op: "pause", ms: 1 })).toThrow(/64/);
  });
});

describe("parse errors", () => {
  it("rejects junk text", () => {
    expect(() => parseProgram("{nope")).toThrow(/JSON/);
  });

  it("rejects unknown ops with the step index", () => {
    const text = '{"version":1,"name":"","steps":[{"op":"dance","ms":10}]}';
    expect(() => parseProgram(text)).toThrow(/step 0.*dance/);
  });

  it("rejects unexpected fields", () => {
    const text = '{"version":1,"name":"","steps":[{"op":"pause","ms":10,"loop":2}]}';
    expect(() => parseProgram(text)).toThrow(/unexpected field 'loop'/);
  });

  it("rejects the wrong version", () => {
    expect(() => parseProgram('{"version":2,"name":"","steps":[]}')).toThrow(/version/);
  });
});

describe("edit operations", () => {
  it("append/remove/move keep order and are pure", () => {
    const one = appendStep(emptyProgram(), { op: "forward", ms: 10 });
    const two = appendStep(one, { op: "pause", ms: 20 });
    expect(one.steps.length).toBe(1);
    expect(two.steps.map((s) => s.op)).toEqual(["forward", "pause"]);
    expect(removeStep(two, 0).steps.map((s) => s.op)).toEqual(["pause"]);
    expect(moveStep(two, 0, 1).steps.map((s) => s.op)).toEqual(["pause", "forward"]);
  });

  it("remove rejects a bad index", () => {
    expect(() => removeStep(emptyProgram(), 0)).toThrow(ProgramError);
  });
});

describe("labels and file names", () => {
  it("labels carry the parameters", () => {
    expect(stepLabel({ op: "forward", ms: 1000, power: 75 })).toBe("Forward · 1000 ms · power 75");
    expect(stepLabel({ op: "tone", ms: 500, hz: 440 })).toBe("Tone · 500 ms · 440 Hz");
  });

  it("file names use the program suffix", () => {
    expect(suggestedFileName(emptyProgram("My Program"))).toBe("my-program.mynxt.json");
    expect(suggestedFileName(emptyProgram("  "))).toBe("program.mynxt.json");
  });
});
