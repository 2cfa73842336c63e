import { describe, expect, it } from "vitest";

import { readouts, roiPolygon, velocityArrow, verticalSpeedCircle } from "../src/hud.js";
import type { StateHeader } from "../src/protocol.js";

function stateWith(partial: Partial<StateHeader>): StateHeader {
  return {
    type: "state",
    tick: 0,
    sim_time_s: 0,
    pos: [0, 0, 50],
    vel: [0, 0, 0],
    roll: 0,
    pitch: 0,
    yaw: 0,
    thrust: 2.4525,
    frame_id: 0,
    encoding: "png",
    width: 64,
    height: 36,
    payload_bytes: 0,
    ...partial,
  };
}

describe("footprint overlay", () => {
  it("scales source corners onto the overview within a pixel", () => {
    // 7680-wide source shown at 960: scale 1/8
    const corners: [number, number][] = [
      [1000, 800], [2000, 800], [2000, 1400], [1000, 1400],
    ];
    const poly = roiPolygon(corners, 7680, 960);
    for (let i = 0; i < 4; i++) {
      expect(Math.abs(poly[i].x - corners[i][0] / 8)).toBeLessThan(1e-9);
      expect(Math.abs(poly[i].y - corners[i][1] / 8)).toBeLessThan(1e-9);
    }
  });

  it("keeps fractional precision", () => {
    const poly = roiPolygon([[123.456, 7.89]], 1000, 500);
    expect(poly[0].x).toBeCloseTo(61.728, 9);
    expect(poly[0].y).toBeCloseTo(3.945, 9);
  });
});

describe("velocity arrow", () => {
  it("is zero length at hover", () => {
    const arrow = velocityArrow(0, 0, 10, 100);
    expect(arrow.dx).toBe(0);
    expect(arrow.dy).toBe(0);
    expect(arrow.speed).toBe(0);
  });

  it("points screen-right for +x velocity", () => {
    const arrow = velocityArrow(3, 0, 10, 100);
    expect(arrow.dx).toBe(30);
    expect(arrow.dy).toBe(0);
  });

  it("points screen-up for +y (north) velocity", () => {
    const arrow = velocityArrow(0, 2, 10, 100);
    expect(arrow.dx).toBe(0);
    expect(arrow.dy).toBe(-20);
  });

  it("saturates at the configured length", () => {
    const arrow = velocityArrow(100, 0, 10, 80);
    expect(Math.hypot(arrow.dx, arrow.dy)).toBeCloseTo(80, 9);
    expect(arrow.speed).toBe(100);
  });
});

describe("vertical speed circle", () => {
  it("has zero radius at hover", () => {
    expect(verticalSpeedCircle(0, 6, 40).radius).toBe(0);
  });

  it("fills while descending", () => {
    const down = verticalSpeedCircle(-2, 6, 40);
    expect(down.radius).toBe(12);
    expect(down.filled).toBe(true);
  });

  it("is hollow while climbing", () => {
    expect(verticalSpeedCircle(1.5, 6, 40).filled).toBe(false);
  });
});

describe("readouts", () => {
  it("echoes telemetry fields", () => {
    const r = readouts(stateWith({
      pos: [1, 2, 73.44],
      vel: [3, 4, 0],
      roll: Math.PI / 18,
      thrust: 2.4525,
      tick: 123,
    }));
    expect(r.altitude).toBe("73.4 m");
    expect(r.speed).toBe("5.00 m/s");
    expect(r.attitude).toContain("r 10.0");
    expect(r.thrust).toBe("2.45 N");
    expect(r.tick).toBe("123");
  });
});
