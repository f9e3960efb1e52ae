// Pure HTML renderers for the assignment banner and the balance dashboard.
// Every number displayed is a service payload field passed through fmt();
// the only client-side arithmetic is presentational (bar widths, sparkline
// coordinates).

import { fmt, fmtPercentWidth } from "./format.js";
import { isEnrollmentEvent, isStatePayload } from "./types.js";
import type { EnrollmentEvent, StatePayload } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderBanner(event: unknown): string {
  if (!isEnrollmentEvent(event)) {
    return renderErrorBoundary("enrollment response did not match the expected schema", event);
  }
  const e: EnrollmentEvent = event;
  const phase =
    e.phase === "block"
      ? "initial cohort (permuted block)"
      : e.forced
        ? "adaptive, capacity-forced"
        : "adaptive";
  const discrepancy = e.discrepancy === null ? "—" : fmt(e.discrepancy);
  return `<div class="banner group-${e.assignment}">
  <div class="headline">Group ${e.assignment}</div>
  <div class="detail">subject ${escapeHtml(e.subject_id)} · step ${e.seq} · ${phase}</div>
  <div class="detail">P(group 1) = ${fmt(e.p_group1)} · discrepancy D = ${discrepancy}</div>
</div>`;
}

export function renderNotice(message: string): string {
  return `<div class="banner notice"><div class="headline">${escapeHtml(message)}</div></div>`;
}

export function renderSparkline(values: number[]): string {
  if (values.length === 0) return "";
  const width = 120;
  const height = 26;
  const pad = 2;
  const max = Math.max(...values);
  const min = Math.min(...values);
  const span = max - min || 1;
  const step = values.length > 1 ? (width - 2 * pad) / (values.length - 1) : 0;
  const points = values
    .map((v, i) => {
      const x = pad + i * step;
      const y = height - pad - ((v - min) / span) * (height - 2 * pad);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const shape =
    values.length === 1
      ? `<circle cx="${pad}" cy="${(height / 2).toFixed(1)}" r="2"></circle>`
      : `<polyline points="${points}"></polyline>`;
  return `<svg class="spark" width="${width}" height="${height}" aria-label="energy trend">${shape}</svg>`;
}

export function renderBalance(payload: unknown, energyHistory: number[] = []): string {
  if (!isStatePayload(payload)) {
    return renderErrorBoundary("state payload did not match the expected schema", payload);
  }
  const state: StatePayload = payload;
  const metrics = state.metrics;
  const gaps = Object.values(metrics.abs_mean_diff).concat(Object.values(metrics.abs_sd_diff));
  const maxGap = gaps.length ? Math.max(...gaps) : 0;
  const rows = metrics.covariates
    .map((name) => {
      const mean = metrics.abs_mean_diff[name];
      const sd = metrics.abs_sd_diff[name];
      return `<tr>
  <th>${escapeHtml(name)}</th>
  <td><span data-metric="mean-diff">${fmt(mean)}</span>
    <div class="bar-track"><div class="bar" style="width: ${fmtPercentWidth(mean ?? 0, maxGap)}%"></div></div></td>
  <td><span data-metric="sd-diff">${fmt(sd)}</span>
    <div class="bar-track"><div class="bar" style="width: ${fmtPercentWidth(sd ?? 0, maxGap)}%"></div></div></td>
</tr>`;
    })
    .join("\n");
  return `<div class="balance">
  <div class="size-row">
    <span>enrolled <span class="big" data-metric="enrolled">${state.enrolled}</span> / ${state.target_n}</span>
    <span>groups <span class="big" data-metric="group-sizes">${state.group_sizes[0]} : ${state.group_sizes[1]}</span></span>
    <span>size diff <span class="big" data-metric="size-diff">${fmt(metrics.abs_group_size_diff)}</span></span>
    <span class="muted">status: ${state.status}</span>
  </div>
  <table class="gaps">
    <thead><tr><th>covariate</th><th>|mean gap|</th><th>|SD gap|</th></tr></thead>
    <tbody>
${rows}
    </tbody>
  </table>
  <div class="energy">energy distance:
    <span data-metric="energy">${fmt(metrics.energy)}</span>${renderSparkline(energyHistory)}
  </div>
  <div class="cg">mean correct-guess to date:
    <span data-metric="mean-cg">${fmt(metrics.mean_cg)}</span>
  </div>
</div>`;
}

export function renderErrorBoundary(message: string, payload: unknown): string {
  let dump: string;
  try {
    dump = JSON.stringify(payload, null, 2);
  } catch {
    dump = String(payload);
  }
  return `<div class="error-boundary">
  <strong>${escapeHtml(message)}</strong>
  <pre>${escapeHtml(dump ?? "undefined")}</pre>
</div>`;
}
