import { App } from "./app.js";
import { hello } from "./messages.js";
import { ConsoleSocket, defaultServiceUrl } from "./socket.js";
import { Store } from "./state.js";

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app element");

  const store = new Store();
  const socket = new ConsoleSocket(new WebSocket(defaultServiceUrl(window.location)));
  socket.onMessage((msg) => store.apply(msg));
  socket.onClose(() => {
    store.apply({ type: "guidance", text: "Connection to the service lost - reload the page" });
  });

  const app = new App(root, store, socket);
  app.mount();

  socket.onOpen(() => socket.send(hello("controller")));
}

boot();
