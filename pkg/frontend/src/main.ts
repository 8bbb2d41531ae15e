// Browser entry: wires the native WebSocket into the app shell and paints
// the pure view descriptors onto the page at most 30 times a second.

import { commands, ConsoleApp, NotConnectedError } from "./app.js";
import type { ConsoleState } from "./reducer.js";
import {
  renderBanner,
  renderBiofeedback,
  renderSqiStrip,
  renderWaveforms,
  shouldRedraw,
} from "./render.js";

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const app = new ConsoleApp((url) => new WebSocket(url));

const banner = must<HTMLDivElement>("banner");
const statusLine = must<HTMLDivElement>("status");
const plots = must<HTMLCanvasElement>("plots");
const strip = must<HTMLDivElement>("sqi-strip");
const circle = must<HTMLCanvasElement>("biofeedback");
const conditionInput = must<HTMLInputElement>("condition");
const markCodeInput = must<HTMLInputElement>("mark-code");
const markButton = must<HTMLButtonElement>("mark");

function guarded(fn: () => void): void {
  try {
    fn();
  } catch (err) {
    banner.textContent =
      err instanceof NotConnectedError ? err.message : String(err);
    banner.hidden = false;
  }
}

must<HTMLButtonElement>("start").onclick = () =>
  guarded(() => app.sendCommand(commands.startCondition(conditionInput.value)));
must<HTMLButtonElement>("stop").onclick = () =>
  guarded(() => app.sendCommand(commands.stop()));
markButton.onclick = () =>
  guarded(() => {
    if (app.state.activeMarkCode === 0) {
      app.sendCommand(commands.markOn(Number(markCodeInput.value)));
    } else {
      app.sendCommand(commands.markOff());
    }
  });

function drawPlots(state: ConsoleState): void {
  const ctx = plots.getContext("2d")!;
  ctx.clearRect(0, 0, plots.width, plots.height);
  const views = renderWaveforms(state);
  const laneH = plots.height / Math.max(1, views.length);
  views.forEach((view, lane) => {
    const pts = view.points;
    if (pts.length < 2) return;
    let lo = Infinity;
    let hi = -Infinity;
    for (const p of pts) {
      lo = Math.min(lo, p.v);
      hi = Math.max(hi, p.v);
    }
    const span = hi - lo || 1;
    const t0 = pts[0]!.t;
    const tSpan = pts[pts.length - 1]!.t - t0 || 1;
    ctx.beginPath();
    pts.forEach((p, i) => {
      const x = ((p.t - t0) / tSpan) * plots.width;
      const y = laneH * lane + laneH - ((p.v - lo) / span) * (laneH - 8) - 4;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.strokeStyle = view.frozen ? "#9e9e9e" : "#1565c0";
    ctx.stroke();
    ctx.fillStyle = "#455a64";
    ctx.fillText(view.channel, 4, laneH * lane + 12);
  });
}

function drawStrip(state: ConsoleState): void {
  const segments = renderSqiStrip(state);
  if (strip.childElementCount !== segments.length) {
    strip.replaceChildren(
      ...segments.map(() => {
        const cell = document.createElement("span");
        cell.className = "sqi-cell";
        return cell;
      }),
    );
  }
  segments.forEach((seg, i) => {
    (strip.children[i] as HTMLElement).style.background = seg.color;
  });
}

function drawBiofeedback(state: ConsoleState): void {
  const ctx = circle.getContext("2d")!;
  ctx.clearRect(0, 0, circle.width, circle.height);
  const view = renderBiofeedback(state.biofeedbackNorm);
  ctx.beginPath();
  ctx.arc(circle.width / 2, circle.height / 2, view.radius, 0, 2 * Math.PI);
  ctx.fillStyle = view.color;
  ctx.fill();
}

let lastDrawMs = -Infinity;
function frame(nowMs: number): void {
  if (shouldRedraw(lastDrawMs, nowMs)) {
    lastDrawMs = nowMs;
    const state = app.state;
    const text = renderBanner(state);
    banner.hidden = text === null;
    banner.textContent = text ?? "";
    statusLine.textContent =
      `${state.phase}` +
      (state.condition !== null ? ` ${state.condition}` : "") +
      ` | frames ${state.framesOk} ok / ${state.framesDropped} dropped` +
      (state.metrics.HR_BPM?.value != null
        ? ` | HR ${state.metrics.HR_BPM.value.toFixed(1)} bpm`
        : "");
    markButton.textContent =
      state.activeMarkCode === 0 ? "mark on" : `mark off (${state.activeMarkCode})`;
    drawPlots(state);
    drawStrip(state);
    drawBiofeedback(state);
  }
  requestAnimationFrame(frame);
}

const gatewayUrl =
  new URLSearchParams(location.search).get("gateway") ?? "ws://127.0.0.1:8765";
app.connect(gatewayUrl);
requestAnimationFrame(frame);
