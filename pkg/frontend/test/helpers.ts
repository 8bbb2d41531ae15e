import { readFileSync } from "node:fs";

import type { GatewayMessage } from "../src/types.js";
import type { ConsoleState } from "../src/reducer.js";

export function loadSessionLog(): GatewayMessage[] {
  const raw = readFileSync(new URL("./fixtures/session-log.json", import.meta.url), "utf8");
  return JSON.parse(raw) as GatewayMessage[];
}

/**
 * Snapshot-friendly digest: scalar state verbatim, bulky buffers reduced to
 * per-channel stats and a good/bad strip string so the snapshot stays
 * reviewable while still pinning the reducer's output on the recorded log.
 */
export function digest(state: ConsoleState) {
  const plots: Record<string, unknown> = {};
  for (const [channel, pts] of Object.entries(state.plots)) {
    const vs = pts.map((p) => p.v);
    plots[channel] = {
      n: pts.length,
      firstT: pts[0]?.t ?? null,
      lastT: pts[pts.length - 1]?.t ?? null,
      vMin: vs.length ? Math.min(...vs).toFixed(3) : null,
      vMax: vs.length ? Math.max(...vs).toFixed(3) : null,
    };
  }
  return {
    connected: state.connected,
    phase: state.phase,
    condition: state.condition,
    sessionId: state.sessionId,
    participantId: state.participantId,
    elapsedS: state.elapsedS,
    framesOk: state.framesOk,
    framesDropped: state.framesDropped,
    activeMarkCode: state.activeMarkCode,
    metrics: state.metrics,
    biofeedbackNorm: state.biofeedbackNorm,
    lastError: state.lastError,
    plots,
    sqiStrip: state.sqiBins.map((b) => (b.good ? "G" : "B")).join(""),
    sqiFirstBinStartS: state.sqiBins[0]?.startS ?? null,
  };
}
