/**
 * Wire protocol: 4-byte big-endian header length, UTF-8 JSON header with a
 * "type" field, then an optional binary payload of header.payload_bytes.
 * Over WebSocket each binary message carries exactly one wire message, so
 * the bytes here match the raw TCP framing bit for bit.
 */

export const PROTOCOL_VERSION = 1;

export interface WireMessage {
  header: Record<string, unknown> & { type: string };
  payload: Uint8Array;
}

export interface StateHeader {
  type: "state";
  tick: number;
  sim_time_s: number;
  pos: [number, number, number];
  vel: [number, number, number];
  roll: number;
  pitch: number;
  yaw: number;
  thrust: number;
  frame_id: number;
  encoding: "rgb8" | "png";
  width: number;
  height: number;
  payload_bytes: number;
  footprint_corners_src?: [number, number][];
  scale_factor?: number;
  coverage?: number;
}

export interface OverviewHeader {
  type: "overview";
  frame_id: number;
  encoding: "png";
  src_width: number;
  src_height: number;
  payload_bytes: number;
}

export interface HelloHeader {
  type: "hello";
  protocol_version: number;
  manifest: { width: number; height: number; fps: number; altitude_m: number };
  vac: { width: number; height: number };
  mode: "lockstep" | "realtime";
}

export class ProtocolError extends Error {}

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

export function encodeMessage(
  header: Record<string, unknown>,
  payload?: Uint8Array,
): Uint8Array {
  const body = payload ?? new Uint8Array(0);
  if (body.length > 0 && header["payload_bytes"] !== body.length) {
    throw new ProtocolError("header payload_bytes does not match payload length");
  }
  const head = encoder.encode(JSON.stringify(header));
  const out = new Uint8Array(4 + head.length + body.length);
  new DataView(out.buffer).setUint32(0, head.length, false);
  out.set(head, 4);
  out.set(body, 4 + head.length);
  return out;
}

/** Decode exactly one message; the buffer must contain it in full. */
export function decodeMessage(data: Uint8Array): WireMessage {
  if (data.length < 4) {
    throw new ProtocolError("truncated frame: missing length prefix");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const headerLen = view.getUint32(0, false);
  if (headerLen === 0 || 4 + headerLen > data.length) {
    throw new ProtocolError(`implausible header length ${headerLen}`);
  }
  let header: unknown;
  try {
    header = JSON.parse(decoder.decode(data.subarray(4, 4 + headerLen)));
  } catch (err) {
    throw new ProtocolError(`header is not valid JSON: ${err}`);
  }
  if (typeof header !== "object" || header === null || Array.isArray(header)) {
    throw new ProtocolError("header must be a JSON object");
  }
  const rec = header as Record<string, unknown>;
  if (typeof rec["type"] !== "string") {
    throw new ProtocolError("header missing string 'type' field");
  }
  const payloadBytes = (rec["payload_bytes"] as number | undefined) ?? 0;
  if (!Number.isInteger(payloadBytes) || payloadBytes < 0) {
    throw new ProtocolError(`invalid payload_bytes: ${payloadBytes}`);
  }
  if (4 + headerLen + payloadBytes !== data.length) {
    throw new ProtocolError(
      `message length mismatch: declared ${4 + headerLen + payloadBytes}, got ${data.length}`,
    );
  }
  const payload = data.subarray(4 + headerLen);
  return { header: rec as WireMessage["header"], payload };
}

export function encodeHello(): Uint8Array {
  return encodeMessage({ type: "hello", protocol_version: PROTOCOL_VERSION });
}

export type Stick = [number, number, number, number];

export function encodeStickCommand(stick: Stick, tickAck?: number): Uint8Array {
  const clamped = stick.map((c) => Math.max(-1, Math.min(1, c)));
  const header: Record<string, unknown> = { type: "command", stick: clamped };
  if (tickAck !== undefined) {
    header["tick_ack"] = tickAck;
  }
  return encodeMessage(header);
}
