/**
 * Cockpit state machine, transport-agnostic: feed it decoded wire messages
 * and elapsed time, it tracks telemetry and decides which commands to emit.
 * The HUD only ever echoes what the gateway reported; the sole way the
 * cockpit influences the simulation is the CommandMessages it returns.
 */

import type { Stick, StateHeader, HelloHeader, OverviewHeader, WireMessage } from "./protocol.js";
import { PROTOCOL_VERSION, encodeStickCommand } from "./protocol.js";

export type ConnectionStatus = "connecting" | "live" | "ended" | "failed" | "disconnected";

export const REALTIME_COMMAND_HZ = 30;

export interface CockpitState {
  status: ConnectionStatus;
  banner: string | null;
  mode: "lockstep" | "realtime" | null;
  hello: HelloHeader | null;
  lastState: StateHeader | null;
  lastOverview: OverviewHeader | null;
  stick: Stick;
  inputMode: "keyboard" | "gamepad";
  sessionStatus: string | null;
}

export class Cockpit {
  state: CockpitState = {
    status: "connecting",
    banner: null,
    mode: null,
    hello: null,
    lastState: null,
    lastOverview: null,
    stick: [0, 0, 0, 0],
    inputMode: "keyboard",
    sessionStatus: null,
  };

  /** Payload handlers installed by the browser layer (image decode). */
  onVacPayload: ((header: StateHeader, payload: Uint8Array) => void) | null = null;
  onOverviewPayload: ((header: OverviewHeader, payload: Uint8Array) => void) | null = null;

  private realtimeAccumulator = 0;

  get inputsEnabled(): boolean {
    return this.state.status === "live";
  }

  /** Handle one decoded message; returns command bytes to send, if any. */
  handleMessage(msg: WireMessage): Uint8Array | null {
    const header = msg.header;
    switch (header.type) {
      case "hello": {
        const hello = header as unknown as HelloHeader;
        if (hello.protocol_version !== PROTOCOL_VERSION) {
          this.state.status = "failed";
          this.state.banner =
            `protocol version mismatch: cockpit speaks ${PROTOCOL_VERSION}, ` +
            `simulator speaks ${hello.protocol_version}`;
          return null;
        }
        this.state.hello = hello;
        this.state.mode = hello.mode;
        this.state.status = "live";
        this.state.banner = null;
        return null;
      }
      case "state": {
        const state = header as unknown as StateHeader;
        this.state.lastState = state;
        if (this.onVacPayload) {
          this.onVacPayload(state, msg.payload);
        }
        if (this.state.mode === "lockstep" && this.state.status === "live") {
          // exactly one command per state message
          return encodeStickCommand(this.state.stick, state.tick);
        }
        return null;
      }
      case "overview": {
        const overview = header as unknown as OverviewHeader;
        this.state.lastOverview = overview;
        if (this.onOverviewPayload) {
          this.onOverviewPayload(overview, msg.payload);
        }
        return null;
      }
      case "end": {
        this.state.status = "ended";
        this.state.sessionStatus = (header["status"] as string) ?? "unknown";
        this.state.banner = `session ended: ${this.state.sessionStatus}`;
        return null;
      }
      case "error": {
        const reason = (header["reason"] as string) ?? "unknown error";
        if (reason.includes("protocol version mismatch")) {
          this.state.status = "failed";
          this.state.banner = reason;
        } else {
          this.state.banner = reason;
        }
        return null;
      }
      default:
        return null;
    }
  }

  /** Update the stick (pilot input) each animation frame. */
  setStick(stick: Stick, inputMode: "keyboard" | "gamepad"): void {
    this.state.stick = this.inputsEnabled ? stick : [0, 0, 0, 0];
    this.state.inputMode = inputMode;
  }

  /** Realtime mode emits commands on a 30 Hz clock, independent of states. */
  tickRealtime(dtSeconds: number): Uint8Array | null {
    if (this.state.mode !== "realtime" || !this.inputsEnabled) {
      return null;
    }
    this.realtimeAccumulator += dtSeconds;
    const period = 1 / REALTIME_COMMAND_HZ;
    if (this.realtimeAccumulator < period) {
      return null;
    }
    this.realtimeAccumulator %= period;
    return encodeStickCommand(this.state.stick);
  }

  handleDisconnect(): void {
    if (this.state.status === "live" || this.state.status === "connecting") {
      this.state.status = "disconnected";
      this.state.banner = "connection lost - reload to reconnect";
    }
    this.state.stick = [0, 0, 0, 0];
  }
}
