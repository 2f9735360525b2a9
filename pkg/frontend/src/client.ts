// WebSocket wiring: connect with reconnect-and-backoff, feed the store,
// guard outgoing commands by the store's rules.

import { Command, CommandBody, PROTOCOL_VERSION, parseServerMessage } from "./protocol.js";
import { SessionStore } from "./session.js";

export interface LiveConnection {
  send(cmd: CommandBody): boolean;
  close(): void;
}

export function connectLive(url: string, store: SessionStore): LiveConnection {
  let ws: WebSocket | null = null;
  let closed = false;
  let retryMs = 500;

  const open = () => {
    store.setStatus("connecting");
    ws = new WebSocket(url);

    ws.onopen = () => {
      retryMs = 500;
      store.setStatus("connected");
    };

    ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg) store.apply(msg);
      // unknown/garbled messages are dropped; the protocol may grow
    };

    ws.onclose = () => {
      if (closed) return;
      store.setStatus("disconnected");
      setTimeout(open, retryMs);
      retryMs = Math.min(retryMs * 2, 8000);
    };

    ws.onerror = () => {
      // onclose follows and handles the retry
    };
  };

  open();

  return {
    send(cmd: CommandBody): boolean {
      if (!ws || ws.readyState !== WebSocket.OPEN) return false;
      if (!store.canSend(cmd.type)) return false;
      const full = { v: PROTOCOL_VERSION, ...cmd } as Command;
      ws.send(JSON.stringify(full));
      store.noteSent(full);
      return true;
    },
    close() {
      closed = true;
      ws?.close();
    },
  };
}
