// Wire types for the gateway WebSocket protocol. One JSON object per text
// frame; the authoritative grammar is gateway-schema.json at the repo root
// and the schema test validates these shapes against it.

export type Phase = "idle" | "armed" | "recording" | "stopped";

export type MetricName = "HR_BPM" | "PNN50" | "PSQI" | "RESP_RATE" | "EDA_LEVEL";

export interface StatusMsg {
  type: "status";
  phase: Phase;
  condition: string | null;
  session_id: string | null;
  participant_id: string;
  elapsed_s: number;
  frames_ok: number;
  frames_dropped: number;
}

export interface SamplesMsg {
  type: "samples";
  channel: string;
  t: number;
  value: number;
}

export interface SqiMsg {
  type: "sqi";
  segment_index: number;
  start_s: number;
  bins: (0 | 1)[];
}

export interface MetricMsg {
  type: "metric";
  metric: MetricName;
  window_start_s: number;
  window_s: number;
  value: number | null;
  n_beats?: number | null;
}

export interface BiofeedbackMsg {
  type: "biofeedback";
  metric: MetricName;
  value: number | null;
  norm: number | null;
  t: number;
}

export interface MarkAckMsg {
  type: "mark_ack";
  action: "on" | "off";
  code: number;
  sample_idx: number;
  t: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type GatewayMessage =
  | StatusMsg
  | SamplesMsg
  | SqiMsg
  | MetricMsg
  | BiofeedbackMsg
  | MarkAckMsg
  | ErrorMsg;

export type Command =
  | { cmd: "start_condition"; condition: string }
  | { cmd: "stop" }
  | { cmd: "mark_on"; code: number }
  | { cmd: "mark_off" }
  | { cmd: "status" };

const MESSAGE_TYPES = new Set([
  "status", "samples", "sqi", "metric", "biofeedback", "mark_ack", "error",
]);

/** Parse one inbound text frame; null for anything that is not a known message. */
export function parseMessage(raw: string): GatewayMessage | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const type = (doc as { type?: unknown }).type;
  if (typeof type !== "string" || !MESSAGE_TYPES.has(type)) return null;
  return doc as GatewayMessage;
}
