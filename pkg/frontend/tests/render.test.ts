import { describe, expect, test } from "vitest";

import { renderBalance, renderBanner, renderNotice, renderSparkline } from "../src/render.js";
import type { StatePayload } from "../src/types.js";

// fixture mirroring a real GET /trials/{id} payload; the energy value is the
// observed one the dashboard must reproduce digit-for-digit
const pembroLikeState: StatePayload = {
  schema_version: 1,
  id: "fixture01",
  status: "recruiting",
  covariates: ["age", "pdl1_score", "hemoglobin"],
  target_n: 18,
  n0: 8,
  enrolled: 12,
  group_sizes: [6, 6],
  metrics: {
    covariates: ["age", "pdl1_score", "hemoglobin"],
    group_sizes: [6, 6],
    abs_group_size_diff: 0,
    abs_mean_diff: { age: 0.4183, pdl1_score: 0.125, hemoglobin: 0.07 },
    abs_sd_diff: { age: 0.21, pdl1_score: 0.0441, hemoglobin: 0.3005 },
    energy: 0.671,
    energy_p_value: null,
    cg_series: [0.5, 1, 0, 1],
    mean_cg: 0.625,
  },
  last_event: null,
};

describe("renderBalance", () => {
  test("matches the stored snapshot for the observed-energy fixture", () => {
    expect(renderBalance(pembroLikeState, [0.82, 0.745, 0.671])).toMatchSnapshot();
  });

  test("shows payload numbers verbatim, no extra rounding", () => {
    const html = renderBalance(pembroLikeState);
    expect(html).toContain(">0.671<");
    expect(html).not.toContain(">0.67<");
    expect(html).toContain(">0.625<");
    expect(html).toContain(">0.4183<");
    expect(html).toContain(">6 : 6<");
  });

  test("absent energy renders the n/a placeholder", () => {
    const state = structuredClone(pembroLikeState);
    state.metrics.energy = null;
    state.metrics.mean_cg = null;
    const html = renderBalance(state);
    expect(html).toContain('data-metric="energy">n/a<');
    expect(html).toContain('data-metric="mean-cg">n/a<');
  });

  test("schema mismatch falls back to the error boundary with a raw dump", () => {
    const html = renderBalance({ totally: "unexpected", energy: "0.9" });
    expect(html).toContain("error-boundary");
    expect(html).toContain("did not match the expected schema");
    expect(html).toContain("unexpected");
    expect(html).toMatchSnapshot();
  });
});

describe("renderBanner", () => {
  const base = {
    seq: 9,
    subject_id: "P09",
    assignment: 2,
    p_group1: 0.2,
    phase: "adaptive" as const,
    discrepancy: 0.2923,
    forced: false,
  };

  test("adaptive assignment", () => {
    const html = renderBanner(base);
    expect(html).toContain("Group 2");
    expect(html).toContain("0.2923");
    expect(html).toMatchSnapshot();
  });

  test("block-phase assignment shows no discrepancy", () => {
    const html = renderBanner({
      ...base,
      seq: 1,
      assignment: 1,
      p_group1: 0.5,
      phase: "block",
      discrepancy: null,
    });
    expect(html).toContain("Group 1");
    expect(html).toContain("—");
    expect(html).toContain("permuted block");
  });

  test("forced capacity step is labeled", () => {
    expect(renderBanner({ ...base, forced: true })).toContain("capacity-forced");
  });

  test("subject ids are HTML-escaped", () => {
    const html = renderBanner({ ...base, subject_id: "<img onerror=x>" });
    expect(html).not.toContain("<img");
  });
});

describe("renderSparkline", () => {
  test("empty history renders nothing", () => {
    expect(renderSparkline([])).toBe("");
  });

  test("single point renders a dot, series a polyline", () => {
    expect(renderSparkline([0.5])).toContain("circle");
    const html = renderSparkline([0.9, 0.7, 0.71, 0.5]);
    expect(html).toContain("polyline");
    expect(html).toMatchSnapshot();
  });
});

describe("renderNotice", () => {
  test("renders the message prominently", () => {
    expect(renderNotice("Trial is full")).toContain("Trial is full");
  });
});
