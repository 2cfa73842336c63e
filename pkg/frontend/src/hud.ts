/**
 * HUD geometry and drawing. The pure functions compute screen-space
 * primitives (footprint polygon, velocity arrow, vertical-speed circle,
 * numeric readouts) from telemetry; drawHud paints them onto canvases.
 *
 * Conventions: the overview is shown north-up as recorded, so world +x is
 * screen-right and world +y is screen-up.
 */

import type { StateHeader } from "./protocol.js";

export interface Point {
  x: number;
  y: number;
}

/** Footprint corners in source pixels scaled onto the overview image. */
export function roiPolygon(
  cornersSrc: readonly (readonly [number, number])[],
  srcWidth: number,
  overviewWidth: number,
): Point[] {
  const s = overviewWidth / srcWidth;
  return cornersSrc.map(([u, v]) => ({ x: u * s, y: v * s }));
}

export interface Arrow {
  dx: number;
  dy: number;
  speed: number;
}

/** Horizontal-velocity arrow in screen pixels; +vx right, +vy up-screen. */
export function velocityArrow(
  vx: number,
  vy: number,
  pxPerMps: number,
  maxPx: number,
): Arrow {
  const speed = Math.hypot(vx, vy);
  let dx = vx * pxPerMps + 0; // + 0 folds -0 into +0
  let dy = -vy * pxPerMps + 0;
  const len = Math.hypot(dx, dy);
  if (len > maxPx && len > 0) {
    dx *= maxPx / len;
    dy *= maxPx / len;
  }
  return { dx, dy, speed };
}

export interface VzCircle {
  radius: number;
  filled: boolean; // filled while descending
}

export function verticalSpeedCircle(
  vz: number,
  pxPerMps: number,
  maxPx: number,
): VzCircle {
  return {
    radius: Math.min(Math.abs(vz) * pxPerMps, maxPx),
    filled: vz < 0,
  };
}

export interface Readouts {
  altitude: string;
  speed: string;
  attitude: string;
  thrust: string;
  tick: string;
}

const degrees = (rad: number) => (rad * 180) / Math.PI;

export function readouts(state: StateHeader): Readouts {
  const speed = Math.hypot(state.vel[0], state.vel[1], state.vel[2]);
  return {
    altitude: `${state.pos[2].toFixed(1)} m`,
    speed: `${speed.toFixed(2)} m/s`,
    attitude:
      `r ${degrees(state.roll).toFixed(1)}° ` +
      `p ${degrees(state.pitch).toFixed(1)}° ` +
      `y ${degrees(state.yaw).toFixed(1)}°`,
    thrust: `${state.thrust.toFixed(2)} N`,
    tick: `${state.tick}`,
  };
}

export interface HudScene {
  state: StateHeader;
  vacImage: CanvasImageSource | null;
  overviewImage: CanvasImageSource | null;
  overviewWidth: number;
  overviewHeight: number;
  srcWidth: number;
}

/** Paint the cockpit frame: VAC view center-stage, overview inset with the
 * red footprint box, blue velocity arrow, green vertical-speed circle. */
export function drawHud(
  vacCanvas: HTMLCanvasElement,
  overviewCanvas: HTMLCanvasElement,
  scene: HudScene,
): void {
  const vctx = vacCanvas.getContext("2d");
  if (vctx && scene.vacImage) {
    vctx.imageSmoothingEnabled = false;
    vctx.drawImage(scene.vacImage, 0, 0, vacCanvas.width, vacCanvas.height);
  }

  const octx = overviewCanvas.getContext("2d");
  if (!octx) {
    return;
  }
  octx.clearRect(0, 0, overviewCanvas.width, overviewCanvas.height);
  if (scene.overviewImage) {
    octx.drawImage(scene.overviewImage, 0, 0, scene.overviewWidth, scene.overviewHeight);
  }
  const corners = scene.state.footprint_corners_src;
  if (corners && corners.length === 4) {
    const poly = roiPolygon(corners, scene.srcWidth, scene.overviewWidth);
    octx.strokeStyle = "#ff2020";
    octx.lineWidth = 2;
    octx.beginPath();
    octx.moveTo(poly[0].x, poly[0].y);
    for (const p of poly.slice(1)) {
      octx.lineTo(p.x, p.y);
    }
    octx.closePath();
    octx.stroke();

    const cx = poly.reduce((acc, p) => acc + p.x, 0) / 4;
    const cy = poly.reduce((acc, p) => acc + p.y, 0) / 4;
    const arrow = velocityArrow(scene.state.vel[0], scene.state.vel[1], 8, 80);
    octx.strokeStyle = "#2060ff";
    octx.lineWidth = 3;
    octx.beginPath();
    octx.moveTo(cx, cy);
    octx.lineTo(cx + arrow.dx, cy + arrow.dy);
    octx.stroke();

    const circle = verticalSpeedCircle(scene.state.vel[2], 6, 40);
    octx.strokeStyle = "#20c040";
    octx.fillStyle = "rgba(32, 192, 64, 0.5)";
    octx.lineWidth = 2;
    octx.beginPath();
    octx.arc(cx, cy, circle.radius, 0, 2 * Math.PI);
    if (circle.filled) {
      octx.fill();
    }
    octx.stroke();
  }
}
