// Pure console state reducer. All UI state derives from gateway messages
// plus connect/disconnect edges; commands never mutate state directly, so
// an identical message sequence always renders identically (snapshot-tested)
// and buttons reflect mark_ack rather than optimistic toggles.

import type { GatewayMessage, MetricName, Phase } from "./types.js";

export const PLOT_WINDOW_S = 30;
export const PLOT_MAX_HZ = 30;
export const MAX_POINTS_PER_CHANNEL = PLOT_WINDOW_S * PLOT_MAX_HZ;
export const SQI_BIN_S = 0.5;
export const SQI_KEEP_BINS = Math.round(PLOT_WINDOW_S / SQI_BIN_S);

export interface PlotPoint {
  t: number;
  v: number;
}

export interface SqiBin {
  startS: number;
  good: boolean;
}

export interface MetricReading {
  value: number | null;
  windowStartS: number;
  windowS: number;
}

export interface ConsoleState {
  connected: boolean;
  phase: Phase;
  condition: string | null;
  sessionId: string | null;
  participantId: string | null;
  elapsedS: number;
  framesOk: number;
  framesDropped: number;
  plots: Record<string, PlotPoint[]>;
  sqiBins: SqiBin[];
  activeMarkCode: number;
  metrics: Partial<Record<MetricName, MetricReading>>;
  biofeedbackNorm: number | null;
  lastError: string | null;
}

export type ConsoleEvent =
  | GatewayMessage
  | { type: "connected" }
  | { type: "disconnected" };

export function initialState(): ConsoleState {
  return {
    connected: false,
    phase: "idle",
    condition: null,
    sessionId: null,
    participantId: null,
    elapsedS: 0,
    framesOk: 0,
    framesDropped: 0,
    plots: {},
    sqiBins: [],
    activeMarkCode: 0,
    metrics: {},
    biofeedbackNorm: null,
    lastError: null,
  };
}

function clearedSession(state: ConsoleState): ConsoleState {
  return {
    ...state,
    plots: {},
    sqiBins: [],
    activeMarkCode: 0,
    metrics: {},
    biofeedbackNorm: null,
    lastError: null,
  };
}

function trimPlot(points: PlotPoint[]): PlotPoint[] {
  const latest = points[points.length - 1];
  if (latest === undefined) return points;
  let lo = 0;
  while (lo < points.length && points[lo]!.t < latest.t - PLOT_WINDOW_S) lo++;
  const windowed = lo > 0 ? points.slice(lo) : points;
  return windowed.length > MAX_POINTS_PER_CHANNEL
    ? windowed.slice(windowed.length - MAX_POINTS_PER_CHANNEL)
    : windowed;
}

export function reduce(state: ConsoleState, ev: ConsoleEvent): ConsoleState {
  switch (ev.type) {
    case "connected":
      return { ...state, connected: true };

    case "disconnected":
      // Plots are kept frozen; the renderer shows the banner instead.
      return { ...state, connected: false };

    case "status": {
      const fresh =
        ev.session_id !== null && ev.session_id !== state.sessionId
          ? clearedSession(state)
          : state;
      return {
        ...fresh,
        phase: ev.phase,
        condition: ev.condition,
        sessionId: ev.session_id,
        participantId: ev.participant_id,
        elapsedS: ev.elapsed_s,
        framesOk: ev.frames_ok,
        framesDropped: ev.frames_dropped,
      };
    }

    case "samples": {
      const prev = state.plots[ev.channel] ?? [];
      const next = trimPlot([...prev, { t: ev.t, v: ev.value }]);
      return { ...state, plots: { ...state.plots, [ev.channel]: next } };
    }

    case "sqi": {
      const added = ev.bins.map((b, i) => ({
        startS: ev.start_s + i * SQI_BIN_S,
        good: b === 1,
      }));
      const bins = [...state.sqiBins, ...added];
      return {
        ...state,
        sqiBins: bins.length > SQI_KEEP_BINS ? bins.slice(bins.length - SQI_KEEP_BINS) : bins,
      };
    }

    case "metric":
      return {
        ...state,
        metrics: {
          ...state.metrics,
          [ev.metric]: {
            value: ev.value,
            windowStartS: ev.window_start_s,
            windowS: ev.window_s,
          },
        },
      };

    case "biofeedback":
      return { ...state, biofeedbackNorm: ev.norm };

    case "mark_ack":
      return { ...state, activeMarkCode: ev.action === "on" ? ev.code : 0 };

    case "error":
      return { ...state, lastError: ev.message };
  }
}

export function reduceAll(state: ConsoleState, events: Iterable<ConsoleEvent>): ConsoleState {
  let s = state;
  for (const ev of events) s = reduce(s, ev);
  return s;
}
