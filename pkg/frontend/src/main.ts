/**
 * Browser bootstrap: WebSocket transport, PNG decode, canvas drawing, and
 * the pilot input loop. All protocol/HUD/input logic lives in the pure
 * modules; this file only wires them to the DOM.
 */

import { Cockpit } from "./cockpit.js";
import { drawHud, readouts } from "./hud.js";
import { KeyboardStick, gamepadStick } from "./input.js";
import { decodeMessage, encodeHello, type StateHeader, type OverviewHeader } from "./protocol.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function decodeImage(payload: Uint8Array, mime: string): Promise<ImageBitmap> {
  return createImageBitmap(new Blob([payload.slice()], { type: mime }));
}

function rasterToImageData(payload: Uint8Array, width: number, height: number): ImageData {
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0, j = 0; i < payload.length; i += 3, j += 4) {
    rgba[j] = payload[i];
    rgba[j + 1] = payload[i + 1];
    rgba[j + 2] = payload[i + 2];
    rgba[j + 3] = 255;
  }
  return new ImageData(rgba, width, height);
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const scheme = window.location.protocol === "https:" ? "wss" : "ws";
  const endpoint = params.get("endpoint") ?? `${scheme}://${window.location.host}/ws`;

  const vacCanvas = el<HTMLCanvasElement>("vac");
  const overviewCanvas = el<HTMLCanvasElement>("overview");
  const banner = el<HTMLDivElement>("banner");
  const telemetry = el<HTMLDivElement>("telemetry");

  const cockpit = new Cockpit();
  const keyboard = new KeyboardStick();
  let vacImage: CanvasImageSource | null = null;
  let overviewImage: CanvasImageSource | null = null;
  let overviewDims = { w: 0, h: 0 };
  let srcWidth = 1;

  cockpit.onVacPayload = (header: StateHeader, payload: Uint8Array) => {
    if (vacCanvas.width !== header.width) {
      vacCanvas.width = header.width;
      vacCanvas.height = header.height;
    }
    if (header.encoding === "png") {
      void decodeImage(payload, "image/png").then((img) => {
        vacImage = img;
      });
    } else {
      const ctx = vacCanvas.getContext("2d");
      ctx?.putImageData(rasterToImageData(payload, header.width, header.height), 0, 0);
      vacImage = null; // already painted
    }
  };

  cockpit.onOverviewPayload = (header: OverviewHeader, payload: Uint8Array) => {
    srcWidth = header.src_width;
    void decodeImage(payload, "image/png").then((img) => {
      overviewImage = img;
      overviewDims = { w: img.width, h: img.height };
      if (overviewCanvas.width !== img.width) {
        overviewCanvas.width = img.width;
        overviewCanvas.height = img.height;
      }
    });
  };

  const ws = new WebSocket(endpoint);
  ws.binaryType = "arraybuffer";
  ws.onopen = () => ws.send(encodeHello());
  ws.onmessage = (event: MessageEvent<ArrayBuffer>) => {
    const reply = cockpit.handleMessage(decodeMessage(new Uint8Array(event.data)));
    if (reply) {
      ws.send(reply);
    }
  };
  ws.onclose = () => cockpit.handleDisconnect();
  ws.onerror = () => cockpit.handleDisconnect();

  window.addEventListener("keydown", (e) => {
    if (!e.repeat) {
      keyboard.keyDown(e.code);
    }
  });
  window.addEventListener("keyup", (e) => keyboard.keyUp(e.code));
  window.addEventListener("blur", () => keyboard.releaseAll());

  let last = performance.now();
  function frame(now: number): void {
    const dt = Math.min((now - last) / 1000, 0.1);
    last = now;

    const pads = navigator.getGamepads ? navigator.getGamepads() : [];
    const pad = pads.find((p) => p && p.connected);
    if (pad) {
      cockpit.setStick(gamepadStick(pad.axes), "gamepad");
    } else {
      cockpit.setStick(keyboard.update(dt), "keyboard");
    }

    const rtCommand = cockpit.tickRealtime(dt);
    if (rtCommand && ws.readyState === WebSocket.OPEN) {
      ws.send(rtCommand);
    }

    banner.textContent = cockpit.state.banner ?? "";
    banner.style.display = cockpit.state.banner ? "block" : "none";

    const state = cockpit.state.lastState;
    if (state) {
      drawHud(vacCanvas, overviewCanvas, {
        state,
        vacImage,
        overviewImage,
        overviewWidth: overviewDims.w,
        overviewHeight: overviewDims.h,
        srcWidth,
      });
      const r = readouts(state);
      telemetry.textContent =
        `alt ${r.altitude}   spd ${r.speed}   ${r.attitude}   ` +
        `thr ${r.thrust}   tick ${r.tick}   ` +
        `[${cockpit.state.inputMode}] ${cockpit.state.status}`;
    }
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

main();
