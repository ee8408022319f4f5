/**
 * The console itself: home screen with the five mode buttons, one screen
 * per control mode with its CONNECT button and live instruction label,
 * and the Logic Creator with palette, step list, save/load, RUN and
 * CANCEL.  Warnings from the service appear as a modal pop-up.
 */

import { ArrowKeyController, SpeechController, TiltController } from "./controls.js";
import { downloadText, readTextFile } from "./files.js";
import {
  DriveCmd,
  SPEECH_WORDS,
  ScreenName,
  connect,
  disconnect,
  programCancel,
  programLoad,
  programRun,
  screen as screenMsg,
} from "./messages.js";
import {
  DEFAULT_POWER,
  MOTION_OPS,
  ProgramError,
  ProgramFile,
  StepOp,
  appendStep,
  emptyProgram,
  moveStep,
  parseProgram,
  removeStep,
  serializeProgram,
  stepLabel,
  suggestedFileName,
} from "./program.js";
import { ConsoleSocket } from "./socket.js";
import { Store, UiState, clearFeedback, dismissWarning } from "./state.js";

interface ScreenView {
  el: HTMLElement;
  update(state: UiState): void;
  destroy(): void;
}

const MODE_BUTTONS: Array<{ label: string; screen: ScreenName }> = [
  { label: "Speech", screen: "speech" },
  { label: "Tilt", screen: "tilt" },
  { label: "Arrow Keys", screen: "arrows" },
  { label: "Logic Creator", screen: "logic_creator" },
];

export class App {
  private root: HTMLElement;
  private store: Store;
  private socket: ConsoleSocket;
  private view: ScreenView | null = null;
  private shownScreen: ScreenName | null = null;
  private program: ProgramFile = emptyProgram();

  constructor(root: HTMLElement, store: Store, socket: ConsoleSocket) {
    this.root = root;
    this.store = store;
    this.socket = socket;
  }

  mount(): void {
    this.store.subscribe((state) => this.render(state));
  }

  private navigate(screen: ScreenName): void {
    this.socket.send(screenMsg(screen));
  }

  private render(state: UiState): void {
    if (state.screen !== this.shownScreen) {
      this.view?.destroy();
      this.root.textContent = "";
      this.view = this.buildScreen(state.screen);
      this.root.appendChild(this.view.el);
      this.shownScreen = state.screen;
    }
    this.view?.update(state);
    this.renderModal(state);
  }

  private buildScreen(screen: ScreenName): ScreenView {
    switch (screen) {
      case "home":
        return this.homeScreen();
      case "speech":
        return this.speechScreen();
      case "tilt":
        return this.tiltScreen();
      case "arrows":
        return this.arrowsScreen();
      case "logic_creator":
        return this.logicScreen();
    }
  }

  // -- home ---------------------------------------------------------------

  private homeScreen(): ScreenView {
    const el = div("screen home-screen");
    el.appendChild(h1("MyNXT Console"));
    const guidance = guidanceLabel();
    el.appendChild(guidance);
    const grid = div("home-grid");
    for (const mode of MODE_BUTTONS) {
      grid.appendChild(bigButton(mode.label, () => this.navigate(mode.screen)));
    }
    // the fifth button: purpose unexplained upstream, kept as Help/About
    grid.appendChild(bigButton("Help", () => this.showHelp()));
    el.appendChild(grid);
    return {
      el,
      update: (state) => setText(guidance, state.guidance),
      destroy: () => undefined,
    };
  }

  private showHelp(): void {
    window.alert(
      "Pick a control mode to drive the robot directly, or open the " +
        "Logic Creator to build a program and run it with RUN. Every " +
        "screen shows the next step on its instruction label.",
    );
  }

  // -- shared control-screen chrome -----------------------------------------

  private controlHeader(title: string, el: HTMLElement): HTMLElement {
    const bar = div("top-bar");
    bar.appendChild(smallButton("< Home", () => this.navigate("home")));
    bar.appendChild(h1(title));
    const connectBtn = smallButton("CONNECT", () => this.socket.send(connect()));
    connectBtn.classList.add("connect-button");
    bar.appendChild(connectBtn);
    el.appendChild(bar);
    return connectBtn;
  }

  private static updateConnect(button: HTMLElement, state: UiState): void {
    const linked = state.link.state === "connected";
    setText(button, linked ? "DISCONNECT" : "CONNECT");
    button.classList.toggle("connected", linked);
  }

  private connectOrDisconnect(state: UiState): void {
    if (state.link.state === "connected") this.socket.send(disconnect());
    else this.socket.send(connect());
  }

  // -- speech ----------------------------------------------------------------

  private speechScreen(): ScreenView {
    const el = div("screen");
    const connectBtn = this.controlHeader("Speech", el);
    connectBtn.onclick = () => this.connectOrDisconnect(this.store.current);
    const guidance = guidanceLabel();
    el.appendChild(guidance);

    const controller = new SpeechController((m) => this.socket.send(m));
    const micButton = bigButton("🎤 Speak", () => this.listenOnce(controller, micButton));
    micButton.classList.add("mic-button");
    el.appendChild(micButton);

    const fallback = div("speech-fallback");
    const input = textInput("or type a command");
    const say = smallButton("Send", () => {
      controller.utter(input.value);
      input.value = "";
    });
    input.onkeydown = (ev) => {
      if (ev.key === "Enter") say.click();
    };
    fallback.append(input, say);
    el.appendChild(fallback);

    const nomatch = div("nomatch-note");
    el.appendChild(nomatch);
    const words = div("command-words");
    setText(words, `Commands: ${SPEECH_WORDS.join(", ")}`);
    el.appendChild(words);

    return {
      el,
      update: (state) => {
        setText(guidance, state.guidance);
        App.updateConnect(connectBtn, state);
        setText(
          nomatch,
          state.nomatch === null
            ? ""
            : `Didn't recognize "${state.nomatch}" - try: ${SPEECH_WORDS.join(", ")}`,
        );
      },
      destroy: () => undefined,
    };
  }

  private listenOnce(controller: SpeechController, button: HTMLElement): void {
    const RecognizerClass =
      (window as any).SpeechRecognition ?? (window as any).webkitSpeechRecognition;
    if (RecognizerClass === undefined) {
      setText(button, "🎤 (no microphone support - type below)");
      return;
    }
    const recognizer = new RecognizerClass();
    recognizer.lang = "en-US";
    recognizer.maxAlternatives = 1;
    setText(button, "🎤 Listening...");
    recognizer.onresult = (ev: any) => {
      const text = ev.results?.[0]?.[0]?.transcript ?? "";
      controller.utter(text);
    };
    recognizer.onend = () => setText(button, "🎤 Speak");
    recognizer.onerror = () => setText(button, "🎤 Speak");
    recognizer.start();
  }

  // -- tilt ---------------------------------------------------------------------

  private tiltScreen(): ScreenView {
    const el = div("screen");
    const connectBtn = this.controlHeader("Tilt", el);
    connectBtn.onclick = () => this.connectOrDisconnect(this.store.current);
    const guidance = guidanceLabel();
    el.appendChild(guidance);

    const controller = new TiltController((m) => this.socket.send(m));
    const readout = div("tilt-readout");
    el.appendChild(readout);

    const sliders = div("tilt-sliders");
    const pitchSlider = rangeInput("pitch");
    const rollSlider = rangeInput("roll");
    const onSlide = () => {
      const pitch = Number(pitchSlider.value);
      const roll = Number(rollSlider.value);
      setText(readout, `pitch ${pitch}°  roll ${roll}°`);
      controller.update(pitch, roll);
    };
    pitchSlider.oninput = onSlide;
    rollSlider.oninput = onSlide;
    sliders.append(labeled("Pitch (forward/back)", pitchSlider), labeled("Roll (left/right)", rollSlider));
    el.appendChild(sliders);

    const onOrientation = (ev: DeviceOrientationEvent) => {
      if (ev.beta === null || ev.gamma === null) return;
      setText(readout, `pitch ${ev.beta.toFixed(0)}°  roll ${ev.gamma.toFixed(0)}°`);
      controller.update(ev.beta, ev.gamma);
    };
    window.addEventListener("deviceorientation", onOrientation);

    return {
      el,
      update: (state) => {
        setText(guidance, state.guidance);
        App.updateConnect(connectBtn, state);
      },
      destroy: () => {
        window.removeEventListener("deviceorientation", onOrientation);
        controller.reset(); // level out on exit
      },
    };
  }

  // -- arrows ----------------------------------------------------------------------

  private arrowsScreen(): ScreenView {
    const el = div("screen");
    const connectBtn = this.controlHeader("Arrow Keys", el);
    connectBtn.onclick = () => this.connectOrDisconnect(this.store.current);
    const guidance = guidanceLabel();
    el.appendChild(guidance);

    const controller = new ArrowKeyController((m) => this.socket.send(m));
    const onKeyDown = (ev: KeyboardEvent) => {
      if (ev.key in KEY_HINT) ev.preventDefault();
      controller.keyDown(ev.key, ev.repeat);
    };
    const onKeyUp = (ev: KeyboardEvent) => controller.keyUp(ev.key);
    window.addEventListener("keydown", onKeyDown);
    window.addEventListener("keyup", onKeyUp);

    const pad = div("arrow-pad");
    const rows: Array<Array<DriveCmd | null>> = [
      [null, "forward", null],
      ["left", "stop", "right"],
      [null, "backward", null],
    ];
    for (const row of rows) {
      const rowEl = div("arrow-row");
      for (const cmd of row) {
        if (cmd === null) {
          rowEl.appendChild(div("arrow-spacer"));
          continue;
        }
        const btn = bigButton(ARROW_GLYPHS[cmd], () => undefined);
        btn.onpointerdown = () => controller.buttonPress(cmd);
        btn.onpointerup = () => controller.buttonRelease();
        btn.onpointerleave = () => controller.buttonRelease();
        rowEl.appendChild(btn);
      }
      pad.appendChild(rowEl);
    }
    el.appendChild(pad);
    const hint = div("key-hint");
    setText(hint, "Hold an arrow key (or WASD) to drive; release to stop.");
    el.appendChild(hint);

    return {
      el,
      update: (state) => {
        setText(guidance, state.guidance);
        App.updateConnect(connectBtn, state);
      },
      destroy: () => {
        window.removeEventListener("keydown", onKeyDown);
        window.removeEventListener("keyup", onKeyUp);
        controller.releaseAll(); // leaving the screen stops the robot
      },
    };
  }

  // -- logic creator ------------------------------------------------------------------

  private logicScreen(): ScreenView {
    const el = div("screen logic-screen");
    const connectBtn = this.controlHeader("Logic Creator", el);
    connectBtn.onclick = () => this.connectOrDisconnect(this.store.current);
    const guidance = guidanceLabel();
    el.appendChild(guidance);

    const nameRow = div("name-row");
    const nameInput = textInput("program name");
    nameInput.value = this.program.name;
    nameInput.maxLength = 64;
    nameInput.oninput = () => {
      this.program = { ...this.program, name: nameInput.value };
    };
    nameRow.append(labeled("Name", nameInput));
    el.appendChild(nameRow);

    const palette = div("palette");
    const msInput = numberInput("ms", 1, 60000, 1000);
    const powerInput = numberInput("power", 1, 100, DEFAULT_POWER);
    const hzInput = numberInput("hz", 200, 14000, 440);
    const paletteNote = div("palette-note");
    const stepList = div("step-list");

    const refreshList = (state: UiState) => {
      stepList.textContent = "";
      this.program.steps.forEach((step, i) => {
        const row = div("step-row");
        if (state.activeStep === i && state.run.state === "running")
          row.classList.add("active-step");
        const label = div("step-label");
        setText(label, `${i + 1}. ${stepLabel(step)}`);
        row.appendChild(label);
        row.appendChild(smallButton("↑", () => mutate(() => moveStep(this.program, i, Math.max(0, i - 1)), state)));
        row.appendChild(smallButton("↓", () => mutate(() => moveStep(this.program, i, Math.min(this.program.steps.length - 1, i + 1)), state)));
        row.appendChild(smallButton("✕", () => mutate(() => removeStep(this.program, i), state)));
        stepList.appendChild(row);
      });
    };

    const mutate = (fn: () => ProgramFile, state: UiState) => {
      try {
        this.program = fn();
        setText(paletteNote, "");
      } catch (e) {
        if (e instanceof ProgramError) setText(paletteNote, e.message);
        else throw e;
      }
      refreshList(state);
    };

    for (const op of [...MOTION_OPS, "pause", "tone"] as StepOp[]) {
      palette.appendChild(
        smallButton(`+ ${stepLabel({ op, ms: 0 }).split(" ·")[0]}`, () => {
          const ms = Math.trunc(Number(msInput.value));
          const step: { op: StepOp; ms: number; power?: number; hz?: number } = { op, ms };
          if (MOTION_OPS.includes(op)) step.power = Math.trunc(Number(powerInput.value));
          if (op === "tone") step.hz = Math.trunc(Number(hzInput.value));
          mutate(() => appendStep(this.program, step), this.store.current);
        }),
      );
    }
    el.appendChild(palette);
    const params = div("palette-params");
    params.append(
      labeled("Duration ms", msInput),
      labeled("Power %", powerInput),
      labeled("Tone Hz", hzInput),
    );
    el.appendChild(params);
    el.appendChild(paletteNote);
    el.appendChild(stepList);

    const actions = div("logic-actions");
    const runBtn = bigButton("RUN", () => {
      this.socket.send(programLoad(this.program));
      this.socket.send(programRun());
    });
    runBtn.classList.add("run-button");
    const cancelBtn = bigButton("CANCEL", () => this.socket.send(programCancel()));
    const saveBtn = smallButton("Save", () => {
      downloadText(serializeProgram(this.program), suggestedFileName(this.program));
    });
    const loadInput = document.createElement("input");
    loadInput.type = "file";
    loadInput.accept = ".json,.mynxt.json";
    loadInput.style.display = "none";
    loadInput.onchange = async () => {
      const file = loadInput.files?.[0];
      loadInput.value = "";
      if (file === undefined) return;
      try {
        this.program = parseProgram(await readTextFile(file));
        nameInput.value = this.program.name;
        setText(paletteNote, "");
      } catch (e) {
        setText(paletteNote, `load failed: ${(e as Error).message}`);
      }
      refreshList(this.store.current);
    };
    const loadBtn = smallButton("Load", () => loadInput.click());
    actions.append(runBtn, cancelBtn, saveBtn, loadBtn, loadInput);
    el.appendChild(actions);

    refreshList(this.store.current);
    return {
      el,
      update: (state) => {
        setText(guidance, state.guidance);
        App.updateConnect(connectBtn, state);
        refreshList(state);
      },
      destroy: () => undefined,
    };
  }

  // -- modal --------------------------------------------------------------------------

  private renderModal(state: UiState): void {
    let modal = document.getElementById("warning-modal");
    if (state.warning === null) {
      modal?.remove();
      return;
    }
    if (modal === null) {
      modal = div("modal-backdrop");
      modal.id = "warning-modal";
      const box = div("modal-box");
      const text = div("modal-text");
      text.id = "warning-text";
      box.appendChild(text);
      box.appendChild(
        bigButton("OK", () => {
          this.store.update(clearFeedback(dismissWarning(this.store.current)));
        }),
      );
      modal.appendChild(box);
      document.body.appendChild(modal);
    }
    const textEl = document.getElementById("warning-text");
    if (textEl !== null) setText(textEl, state.warning.text);
  }
}

const ARROW_GLYPHS: Record<DriveCmd, string> = {
  forward: "▲",
  backward: "▼",
  left: "◀",
  right: "▶",
  stop: "■",
};

const KEY_HINT: Record<string, true> = {
  ArrowUp: true,
  ArrowDown: true,
  ArrowLeft: true,
  ArrowRight: true,
};

// -- tiny DOM helpers ------------------------------------------------------------

function div(className: string): HTMLDivElement {
  const el = document.createElement("div");
  el.className = className;
  return el;
}

function h1(text: string): HTMLHeadingElement {
  const el = document.createElement("h1");
  el.textContent = text;
  return el;
}

function setText(el: HTMLElement, text: string): void {
  if (el.textContent !== text) el.textContent = text;
}

function bigButton(label: string, onClick: () => void): HTMLButtonElement {
  const el = document.createElement("button");
  el.className = "big-button";
  el.textContent = label;
  el.onclick = onClick;
  return el;
}

function smallButton(label: string, onClick: () => void): HTMLButtonElement {
  const el = document.createElement("button");
  el.className = "small-button";
  el.textContent = label;
  el.onclick = onClick;
  return el;
}

function guidanceLabel(): HTMLElement {
  const el = div("guidance-label");
  el.setAttribute("data-role", "guidance");
  return el;
}

function textInput(placeholder: string): HTMLInputElement {
  const el = document.createElement("input");
  el.type = "text";
  el.placeholder = placeholder;
  return el;
}

function numberInput(name: string, min: number, max: number, value: number): HTMLInputElement {
  const el = document.createElement("input");
  el.type = "number";
  el.name = name;
  el.min = String(min);
  el.max = String(max);
  el.value = String(value);
  el.title = `${min}..${max}`;
  return el;
}

function rangeInput(name: string): HTMLInputElement {
  const el = document.createElement("input");
  el.type = "range";
  el.name = name;
  el.min = "-90";
  el.max = "90";
  el.value = "0";
  return el;
}

function labeled(text: string, input: HTMLElement): HTMLElement {
  const wrap = div("labeled");
  const label = document.createElement("label");
  label.textContent = text;
  wrap.append(label, input);
  return wrap;
}
