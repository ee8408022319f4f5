/**
 * Console state and the reducer that folds server messages into it.
 *
 * The guidance label is never fabricated locally: it always equals the
 * text of the last "guidance" message the service sent.
 */

import type { LinkInfo, Pose, RunInfo, ScreenName, ServerMessage } from "./messages.js";

export interface UiState {
  screen: ScreenName;
  link: LinkInfo;
  run: RunInfo;
  guidance: string;
  batteryMv: number | null;
  pose: Pose | null;
  /** Index highlighted in the Logic Creator while a program runs. */
  activeStep: number | null;
  /** Pending pop-up; null once dismissed. */
  warning: { code: string; text: string } | null;
  lastError: { code: string; reason: string } | null;
  /** Inline speech feedback for an unrecognized utterance. */
  nomatch: string | null;
}

export const initialState: UiState = {
  screen: "home",
  link: { state: "disconnected" },
  run: { state: "idle" },
  guidance: "",
  batteryMv: null,
  pose: null,
  activeStep: null,
  warning: null,
  lastError: null,
  nomatch: null,
};

export function applyServerMessage(state: UiState, msg: ServerMessage): UiState {
  switch (msg.type) {
    case "state": {
      const activeStep =
        msg.run.state === "running" && msg.run.step !== undefined
          ? msg.run.step
          : msg.run.state === "running"
            ? state.activeStep
            : null;
      return { ...state, link: msg.link, screen: msg.screen, run: msg.run, activeStep };
    }
    case "guidance":
      return { ...state, guidance: msg.text };
    case "warning":
      return { ...state, warning: { code: msg.code, text: msg.text } };
    case "error":
      return { ...state, lastError: { code: msg.code, reason: msg.reason } };
    case "progress":
      return { ...state, activeStep: msg.step };
    case "telemetry":
      return {
        ...state,
        batteryMv: msg.battery_mv ?? state.batteryMv,
        pose: msg.pose ?? state.pose,
      };
    case "speech.nomatch":
      return { ...state, nomatch: msg.utterance };
  }
}

export function dismissWarning(state: UiState): UiState {
  return { ...state, warning: null };
}

export function clearFeedback(state: UiState): UiState {
  return { ...state, lastError: null, nomatch: null };
}

/** Tiny store: fold messages, notify subscribers. */
export class Store {
  private state: UiState = initialState;
  private listeners: Array<(s: UiState) => void> = [];

  get current(): UiState {
    return this.state;
  }

  update(next: UiState): void {
    this.state = next;
    for (const listener of this.listeners) listener(next);
  }

  apply(msg: ServerMessage): void {
    this.update(applyServerMessage(this.state, msg));
  }

  subscribe(listener: (s: UiState) => void): void {
    this.listeners.push(listener);
    listener(this.state);
  }
}
