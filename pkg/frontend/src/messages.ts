/**
 * The bridge service's WebSocket schema: one JSON object per text frame.
 *
 * The console must only ever put schema-valid messages on the wire, so
 * every outgoing message goes through a builder here and through
 * `isClientMessage` in tests.  Incoming frames are narrowed by
 * `parseServerMessage`; anything unrecognized comes back as null and is
 * ignored rather than crashing the console.
 */

import type { ProgramFile } from "./program.js";

export type ScreenName = "home" | "speech" | "tilt" | "arrows" | "logic_creator";
export type DriveCmd = "forward" | "backward" | "left" | "right" | "stop";
export type Role = "controller" | "observer";
export type LinkStateName = "disconnected" | "connecting" | "connected" | "faulted";
export type RunStateName = "idle" | "running" | "finished" | "cancelled" | "failed";

export interface LinkInfo {
  state: LinkStateName;
  reason?: string;
}

export interface RunInfo {
  state: RunStateName;
  step?: number;
  reason?: string;
}

export interface Pose {
  x: number;
  y: number;
  theta: number;
}

export type ClientMessage =
  | { type: "hello"; role: Role }
  | { type: "screen"; screen: ScreenName }
  | { type: "connect"; target?: string }
  | { type: "disconnect" }
  | { type: "drive"; cmd: DriveCmd }
  | { type: "tilt"; pitch: number; roll: number }
  | { type: "speech"; utterance: string }
  | { type: "program.load"; program: ProgramFile }
  | { type: "program.run" }
  | { type: "program.cancel" };

export type ServerMessage =
  | { type: "state"; link: LinkInfo; screen: ScreenName; run: RunInfo }
  | { type: "guidance"; text: string }
  | { type: "warning"; code: string; text: string }
  | { type: "error"; code: string; reason: string }
  | { type: "progress"; step: number }
  | { type: "telemetry"; battery_mv?: number; pose?: Pose }
  | { type: "speech.nomatch"; utterance: string };

export const SCREENS: ScreenName[] = ["home", "speech", "tilt", "arrows", "logic_creator"];
export const DRIVE_COMMANDS: DriveCmd[] = ["forward", "backward", "left", "right", "stop"];

/** The spoken commands listed at the bottom of the speech screen. */
export const SPEECH_WORDS = ["forward", "backward", "back", "left", "right", "stop"];

// -- builders -----------------------------------------------------------------

export const hello = (role: Role): ClientMessage => ({ type: "hello", role });
export const screen = (name: ScreenName): ClientMessage => ({ type: "screen", screen: name });
export const connect = (target?: string): ClientMessage =>
  target === undefined ? { type: "connect" } : { type: "connect", target };
export const disconnect = (): ClientMessage => ({ type: "disconnect" });
export const drive = (cmd: DriveCmd): ClientMessage => ({ type: "drive", cmd });
export const tilt = (pitch: number, roll: number): ClientMessage => ({ type: "tilt", pitch, roll });
export const speech = (utterance: string): ClientMessage => ({ type: "speech", utterance });
export const programLoad = (program: ProgramFile): ClientMessage => ({
  type: "program.load",
  program,
});
export const programRun = (): ClientMessage => ({ type: "program.run" });
export const programCancel = (): ClientMessage => ({ type: "program.cancel" });

// -- guards ---------------------------------------------------------------------

const isObject = (v: unknown): v is Record<string, unknown> =>
  typeof v === "object" && v !== null && !Array.isArray(v);

const isFiniteNumber = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);

export function isClientMessage(v: unknown): v is ClientMessage {
  if (!isObject(v) || typeof v.type !== "string") return false;
  switch (v.type) {
    case "hello":
      return v.role === "controller" || v.role === "observer";
    case "screen":
      return SCREENS.includes(v.screen as ScreenName);
    case "connect":
      return v.target === undefined || typeof v.target === "string";
    case "disconnect":
    case "program.run":
    case "program.cancel":
      return true;
    case "drive":
      return DRIVE_COMMANDS.includes(v.cmd as DriveCmd);
    case "tilt":
      return isFiniteNumber(v.pitch) && isFiniteNumber(v.roll);
    case "speech":
      return typeof v.utterance === "string";
    case "program.load":
      return isObject(v.program);
    default:
      return false;
  }
}

const LINK_STATES: LinkStateName[] = ["disconnected", "connecting", "connected", "faulted"];
const RUN_STATES: RunStateName[] = ["idle", "running", "finished", "cancelled", "failed"];

function isLinkInfo(v: unknown): v is LinkInfo {
  return isObject(v) && LINK_STATES.includes(v.state as LinkStateName);
}

function isRunInfo(v: unknown): v is RunInfo {
  return isObject(v) && RUN_STATES.includes(v.state as RunStateName);
}

function isPose(v: unknown): v is Pose {
  return isObject(v) && isFiniteNumber(v.x) && isFiniteNumber(v.y) && isFiniteNumber(v.theta);
}

export function parseServerMessage(text: string): ServerMessage | null {
  let v: unknown;
  try {
    v = JSON.parse(text);
  } catch {
    return null;
  }
  if (!isObject(v) || typeof v.type !== "string") return null;
  switch (v.type) {
    case "state":
      return isLinkInfo(v.link) && SCREENS.includes(v.screen as ScreenName) && isRunInfo(v.run)
        ? (v as ServerMessage)
        : null;
    case "guidance":
      return typeof v.text === "string" ? (v as ServerMessage) : null;
    case "warning":
      return typeof v.code === "string" && typeof v.text === "string"
        ? (v as ServerMessage)
        : null;
    case "error":
      return typeof v.code === "string" && typeof v.reason === "string"
        ? (v as ServerMessage)
        : null;
    case "progress":
      return isFiniteNumber(v.step) ? (v as ServerMessage) : null;
    case "telemetry":
      if (v.battery_mv !== undefined && !isFiniteNumber(v.battery_mv)) return null;
      if (v.pose !== undefined && !isPose(v.pose)) return null;
      return v as ServerMessage;
    case "speech.nomatch":
      return typeof v.utterance === "string" ? (v as ServerMessage) : null;
    default:
      return null;
  }
}
