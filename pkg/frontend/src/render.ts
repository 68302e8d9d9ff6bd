/** Pure HTML-string renderers. The whole view is a function of the app
 * state, so the UI is reconstructible from the turn list alone; nothing
 * here mutates anything or talks to the network. */

import { AppState } from "./state.js";
import { ChatAllResponse, ConversationTurn, EMOTIONS, TraceStep } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function clamp01(x: number): number {
  if (Number.isNaN(x)) return 0;
  return Math.min(1, Math.max(0, x));
}

/** Exactly six options in the fixed category order. */
export function renderEmotionPicker(selected: string): string {
  const options = EMOTIONS.map((name) => {
    const sel = name === selected ? " selected" : "";
    return `<option value="${name}"${sel}>${name}</option>`;
  }).join("");
  return `<select id="emotion" name="emotion" aria-label="response emotion">${options}</select>`;
}

/** Response tokens in order; background intensity follows alpha, and
 * emotion-partition tokens get a marker class. alpha is clamped to [0,1]
 * for display. */
export function renderTokens(trace: TraceStep[]): string {
  return trace
    .map((step) => {
      const alpha = clamp01(step.alpha);
      const classes = step.partition === "emotion" ? "token token-emotion" : "token";
      const style = alpha > 0 ? ` style="background:rgba(235,110,40,${(alpha * 0.8).toFixed(3)})"` : "";
      const title = `alpha ${alpha.toFixed(3)}, memory ${step.memory_norm.toFixed(4)}`;
      return `<span class="${classes}"${style} title="${title}">${escapeHtml(step.token)}</span>`;
    })
    .join(" ");
}

/** Memory-norm sparkline: one point per token, y scaled to the first
 * (largest) norm; a non-increasing series renders a non-increasing line. */
export function sparklinePoints(norms: number[], width = 120, height = 24): string {
  if (norms.length === 0) return "";
  const top = Math.max(...norms, 1e-12);
  const step = norms.length > 1 ? width / (norms.length - 1) : 0;
  return norms
    .map((n, i) => {
      const x = norms.length > 1 ? i * step : width / 2;
      const y = height - (clamp01(n / top) * (height - 2) + 1);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export function renderSparkline(norms: number[]): string {
  if (norms.length === 0) return "";
  const points = sparklinePoints(norms);
  return (
    `<svg class="sparkline" width="120" height="24" viewBox="0 0 120 24" role="img"` +
    ` aria-label="internal memory norm per token">` +
    `<polyline fill="none" stroke="#2c7" stroke-width="1.5" points="${points}" /></svg>`
  );
}

export function traceMatchesResponse(turn: ConversationTurn): boolean {
  if (!turn.trace) return false;
  const tokens = turn.response.split(/\s+/).filter((t) => t.length > 0);
  return turn.trace.length === tokens.length;
}

/** Trace view: highlighted tokens, the decay sparkline, raw JSON on
 * demand. Falls back to plain text (with a console warning) when the
 * trace does not line up with the response tokens. */
export function renderTrace(turn: ConversationTurn): string {
  if (!turn.trace) {
    return `<span class="plain">${escapeHtml(turn.response)}</span>`;
  }
  if (!traceMatchesResponse(turn)) {
    console.warn("trace length does not match response tokens; rendering plain text");
    return `<span class="plain">${escapeHtml(turn.response)}</span>`;
  }
  const norms = turn.trace.map((s) => s.memory_norm);
  return (
    `<span class="tokens">${renderTokens(turn.trace)}</span> ${renderSparkline(norms)}` +
    `<details class="raw"><summary>trace JSON</summary>` +
    `<pre>${escapeHtml(JSON.stringify(turn.trace, null, 2))}</pre></details>`
  );
}

/** Six-row comparison table in the fixed category order. */
export function renderCompare(all: ChatAllResponse): string {
  const rows = EMOTIONS.map((name) => {
    const entry = all.responses[name];
    const text = entry && !entry.empty ? escapeHtml(entry.response) : "<em>(no response)</em>";
    const score = entry && entry.score !== null ? entry.score.toFixed(3) : "-";
    return `<tr><th>${name}</th><td>${text}</td><td class="score">${score}</td></tr>`;
  }).join("");
  return `<table class="compare"><tbody>${rows}</tbody></table>`;
}

export function renderTurn(turn: ConversationTurn, index: number): string {
  const compare = turn.compare ? renderCompare(turn.compare) : "";
  const empty = turn.response.length === 0;
  const body = empty
    ? `<em class="empty">(no response: every hypothesis contained unknown words)</em>`
    : renderTrace(turn);
  return (
    `<li class="turn" data-index="${index}">` +
    `<div class="post">you: ${escapeHtml(turn.post)}</div>` +
    `<div class="reply"><span class="badge">${turn.emotion}</span> ${body}</div>` +
    compare +
    `</li>`
  );
}

export function renderApp(state: AppState): string {
  const turns = state.turns.map(renderTurn).join("");
  const error = state.error
    ? `<div class="error" role="alert">${escapeHtml(state.error)}` +
      (state.errorRetryable ? ` <button id="retry" type="button">retry</button>` : "") +
      `</div>`
    : "";
  const disabled = state.pending ? " disabled" : "";
  return (
    `<ol class="turns">${turns}</ol>` +
    error +
    `<form id="chat-form">` +
    `<input id="post" name="post" type="text" placeholder="say something"` +
    ` autocomplete="off"${disabled} />` +
    renderEmotionPicker(state.selectedEmotion) +
    `<label class="compare-toggle"><input id="compare-all" type="checkbox"` +
    `${state.compareAll ? " checked" : ""}${disabled} /> compare all</label>` +
    `<button id="send" type="submit"${disabled}>${state.pending ? "..." : "send"}</button>` +
    `</form>`
  );
}
