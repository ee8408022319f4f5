/**
 * Thin WebSocket wrapper: outgoing messages are schema-checked, incoming
 * frames are parsed and handed to the store; unparseable frames are
 * dropped (the service never sends them, but a console must not crash).
 */

import { ClientMessage, ServerMessage, isClientMessage, parseServerMessage } from "./messages.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "message", handler: (ev: { data: unknown }) => void): void;
  addEventListener(type: "close" | "open", handler: () => void): void;
}

export class ConsoleSocket {
  private ws: WebSocketLike;
  private handlers: Array<(m: ServerMessage) => void> = [];
  private closeHandlers: Array<() => void> = [];
  private openHandlers: Array<() => void> = [];

  constructor(ws: WebSocketLike) {
    this.ws = ws;
    ws.addEventListener("message", (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseServerMessage(ev.data);
      if (msg !== null) for (const handler of this.handlers) handler(msg);
    });
    ws.addEventListener("close", () => {
      for (const handler of this.closeHandlers) handler();
    });
    ws.addEventListener("open", () => {
      for (const handler of this.openHandlers) handler();
    });
  }

  send(msg: ClientMessage): void {
    if (!isClientMessage(msg)) throw new Error(`refusing to send schema-invalid message`);
    this.ws.send(JSON.stringify(msg));
  }

  onMessage(handler: (m: ServerMessage) => void): void {
    this.handlers.push(handler);
  }

  onClose(handler: () => void): void {
    this.closeHandlers.push(handler);
  }

  onOpen(handler: () => void): void {
    this.openHandlers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}

export function defaultServiceUrl(location: { protocol: string; host: string }): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}
