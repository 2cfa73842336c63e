/**
 * Pilot input: keyboard with a smoothed 0-to-1 ramp over 200 ms, or gamepad
 * axes with a 5% deadzone. Output is the normalized stick vector
 * [x roll, y pitch, z thrust, r yaw-rate], each in [-1, 1]; no input means
 * zero stick, which the simulator maps to a hover command.
 */

import type { Stick } from "./protocol.js";

export const RAMP_SECONDS = 0.2;
export const GAMEPAD_DEADZONE = 0.05;

/** One axis driven by a +key and a -key, ramping while held, zero on release. */
export class KeyAxis {
  value = 0;

  update(dtSeconds: number, positiveHeld: boolean, negativeHeld: boolean): number {
    const target = (positiveHeld ? 1 : 0) - (negativeHeld ? 1 : 0);
    if (target === 0) {
      this.value = 0; // releasing is immediate: hands off means hover
    } else {
      const step = dtSeconds / RAMP_SECONDS;
      if (this.value < target) {
        this.value = Math.min(target, this.value + step);
      } else if (this.value > target) {
        this.value = Math.max(target, this.value - step);
      }
    }
    return this.value;
  }
}

export interface KeyBindings {
  rollPos: string; rollNeg: string;   // D / A
  pitchPos: string; pitchNeg: string; // W / S
  thrustPos: string; thrustNeg: string; // R / F
  yawPos: string; yawNeg: string;     // E / Q
}

export const DEFAULT_BINDINGS: KeyBindings = {
  rollPos: "KeyD", rollNeg: "KeyA",
  pitchPos: "KeyW", pitchNeg: "KeyS",
  thrustPos: "KeyR", thrustNeg: "KeyF",
  yawPos: "KeyE", yawNeg: "KeyQ",
};

export class KeyboardStick {
  private axes = { x: new KeyAxis(), y: new KeyAxis(), z: new KeyAxis(), r: new KeyAxis() };
  private held = new Set<string>();

  constructor(private bindings: KeyBindings = DEFAULT_BINDINGS) {}

  keyDown(code: string): void {
    this.held.add(code);
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  releaseAll(): void {
    this.held.clear();
  }

  update(dtSeconds: number): Stick {
    const b = this.bindings;
    const has = (code: string) => this.held.has(code);
    return [
      this.axes.x.update(dtSeconds, has(b.rollPos), has(b.rollNeg)),
      this.axes.y.update(dtSeconds, has(b.pitchPos), has(b.pitchNeg)),
      this.axes.z.update(dtSeconds, has(b.thrustPos), has(b.thrustNeg)),
      this.axes.r.update(dtSeconds, has(b.yawPos), has(b.yawNeg)),
    ];
  }
}

export function applyDeadzone(value: number, deadzone = GAMEPAD_DEADZONE): number {
  if (Math.abs(value) < deadzone) {
    return 0;
  }
  return Math.max(-1, Math.min(1, value));
}

/**
 * Map browser gamepad axes to the stick. Pushing a physical stick forward
 * reports a negative browser axis value, so the pitch and thrust axes are
 * negated to make forward/up positive.
 */
export function gamepadStick(axes: readonly number[]): Stick {
  const axis = (i: number) => applyDeadzone(axes[i] ?? 0);
  return [axis(0) + 0, -axis(1) + 0, -axis(3) + 0, axis(2) + 0]; // + 0 folds -0
}
