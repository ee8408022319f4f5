/**
 * Input capture for the three direct-control screens.
 *
 * Arrow keys: key-down sends the drive command once (auto-repeat ignored),
 * key-up always sends drive{stop}, and leaving the screen releases any
 * held key, so no navigation path leaves a command active.
 *
 * Tilt: device-orientation angles (or the on-screen slider fallback) are
 * forwarded at no more than 20 Hz.
 *
 * Speech: recognized utterances (or typed fallback text) are sent as-is;
 * matching happens server-side against the closed vocabulary.
 */

import type { ClientMessage, DriveCmd } from "./messages.js";
import { drive, speech, tilt } from "./messages.js";

export type Send = (msg: ClientMessage) => void;

const KEY_TO_COMMAND: Record<string, DriveCmd> = {
  ArrowUp: "forward",
  ArrowDown: "backward",
  ArrowLeft: "left",
  ArrowRight: "right",
  w: "forward",
  s: "backward",
  a: "left",
  d: "right",
};

export class ArrowKeyController {
  private send: Send;
  private activeKey: string | null = null;

  constructor(send: Send) {
    this.send = send;
  }

  keyDown(key: string, repeat = false): void {
    const cmd = KEY_TO_COMMAND[key];
    if (cmd === undefined || repeat || this.activeKey === key) return;
    this.activeKey = key;
    this.send(drive(cmd));
  }

  keyUp(key: string): void {
    if (this.activeKey !== key) return;
    this.activeKey = null;
    this.send(drive("stop"));
  }

  /** Called on screen exit: a held key must never outlive its screen. */
  releaseAll(): void {
    if (this.activeKey === null) return;
    this.activeKey = null;
    this.send(drive("stop"));
  }

  /** The on-screen arrow buttons share the press/release contract. */
  buttonPress(cmd: DriveCmd): void {
    this.activeKey = cmd === "stop" ? null : `button:${cmd}`;
    this.send(drive(cmd));
  }

  buttonRelease(): void {
    if (this.activeKey === null) return;
    this.activeKey = null;
    this.send(drive("stop"));
  }

  get held(): boolean {
    return this.activeKey !== null;
  }
}

export const TILT_MIN_INTERVAL_MS = 50; // 20 Hz cap

export class TiltController {
  private send: Send;
  private now: () => number;
  private lastSent = -Infinity;

  constructor(send: Send, now: () => number = () => Date.now()) {
    this.send = send;
    this.now = now;
  }

  /** Pitch: nose-down positive; roll: right-edge-down positive. */
  update(pitch: number, roll: number): void {
    const t = this.now();
    if (t - this.lastSent < TILT_MIN_INTERVAL_MS) return;
    this.lastSent = t;
    this.send(tilt(pitch, roll));
  }

  /** Leaving the screen levels the device out. */
  reset(): void {
    this.lastSent = -Infinity;
    this.send(tilt(0, 0));
  }
}

export class SpeechController {
  private send: Send;

  constructor(send: Send) {
    this.send = send;
  }

  utter(text: string): void {
    if (text.trim() === "") return;
    this.send(speech(text));
  }
}
