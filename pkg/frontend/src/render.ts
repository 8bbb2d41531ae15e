// Pure view layer: state in, drawable descriptors out. Nothing here touches
// the DOM, so the same functions drive the browser canvas and the tests.

import type { ConsoleState, PlotPoint } from "./reducer.js";
import { SQI_BIN_S, SQI_KEEP_BINS } from "./reducer.js";

export const MAX_PLOTTED_CHANNELS = 4;
export const FRAME_MS = 1000 / 30;

export const COLOR_GOOD = "#2e7d32";
export const COLOR_BAD = "#c62828";
export const COLOR_UNASSESSED = "#9e9e9e";

export interface WaveformView {
  channel: string;
  points: PlotPoint[];
  frozen: boolean;
}

export interface SqiStripSegment {
  startS: number;
  color: string;
}

export interface BiofeedbackView {
  radius: number;
  color: string;
  active: boolean;
}

export const BIOFEEDBACK_R_MIN = 20;
export const BIOFEEDBACK_R_MAX = 80;

/** Rolling line plots, at most four channels; frozen while disconnected. */
export function renderWaveforms(state: ConsoleState): WaveformView[] {
  return Object.keys(state.plots)
    .slice(0, MAX_PLOTTED_CHANNELS)
    .map((channel) => ({
      channel,
      points: state.plots[channel] ?? [],
      frozen: !state.connected,
    }));
}

/**
 * SQI strip over the last 30 s: one slot per 0.5 s bin, green for good,
 * red for bad, grey where no assessment has arrived yet.
 */
export function renderSqiStrip(state: ConsoleState): SqiStripSegment[] {
  const byStart = new Map<number, boolean>();
  for (const bin of state.sqiBins) byStart.set(Math.round(bin.startS / SQI_BIN_S), bin.good);
  const endSlot = Math.max(SQI_KEEP_BINS, Math.ceil(state.elapsedS / SQI_BIN_S));
  const segments: SqiStripSegment[] = [];
  for (let slot = endSlot - SQI_KEEP_BINS; slot < endSlot; slot++) {
    const good = byStart.get(slot);
    segments.push({
      startS: slot * SQI_BIN_S,
      color: good === undefined ? COLOR_UNASSESSED : good ? COLOR_GOOD : COLOR_BAD,
    });
  }
  return segments;
}

/** Circle radius scales linearly with norm; color fades blue to red. */
export function renderBiofeedback(norm: number | null): BiofeedbackView {
  if (norm === null || Number.isNaN(norm)) {
    return { radius: BIOFEEDBACK_R_MIN, color: COLOR_UNASSESSED, active: false };
  }
  const n = Math.min(1, Math.max(0, norm));
  const radius = BIOFEEDBACK_R_MIN + n * (BIOFEEDBACK_R_MAX - BIOFEEDBACK_R_MIN);
  const r = Math.round(255 * n);
  const b = Math.round(255 * (1 - n));
  return { radius, color: `rgb(${r}, 0, ${b})`, active: true };
}

/** Banner text, or null when the view needs none. */
export function renderBanner(state: ConsoleState): string | null {
  if (!state.connected) return "disconnected";
  if (state.lastError !== null) return state.lastError;
  return null;
}

/** Redraw gate: at most one frame per FRAME_MS. */
export function shouldRedraw(lastDrawMs: number, nowMs: number): boolean {
  return nowMs - lastDrawMs >= FRAME_MS;
}
