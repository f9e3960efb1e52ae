import { describe, expect, test } from "vitest";

import {
  parseCovariateNames,
  parseGammaRange,
  validateSetup,
  type TrialSetupForm,
} from "../src/validation.js";

function form(overrides: Partial<TrialSetupForm> = {}): TrialSetupForm {
  return {
    covariates: ["age", "weight"],
    method: "nt",
    target_n: 18,
    n0: 8,
    block_size: 4,
    p0: 0.8,
    categories: 3,
    rho: 6,
    gamma_range: [0.5, 4],
    seed: null,
    ...overrides,
  };
}

describe("validateSetup", () => {
  test("accepts the defaults", () => {
    expect(validateSetup(form())).toEqual({});
  });

  test("mirrors the server's configuration rules", () => {
    expect(validateSetup(form({ covariates: [] }))).toHaveProperty("covariates");
    expect(validateSetup(form({ covariates: ["a", "a"] }))).toHaveProperty("covariates");
    expect(validateSetup(form({ method: "xx" }))).toHaveProperty("method");
    expect(validateSetup(form({ n0: 18 }))).toHaveProperty("n0");
    expect(validateSetup(form({ n0: 6, block_size: 4 }))).toHaveProperty("block_size");
    expect(validateSetup(form({ block_size: 3 }))).toHaveProperty("block_size");
    expect(validateSetup(form({ p0: 0.3 }))).toHaveProperty("p0");
    expect(validateSetup(form({ categories: 1 }))).toHaveProperty("categories");
    expect(validateSetup(form({ rho: -1 }))).toHaveProperty("rho");
    expect(validateSetup(form({ gamma_range: [0, 4] }))).toHaveProperty("gamma");
    expect(validateSetup(form({ gamma_range: [5, 4] }))).toHaveProperty("gamma");
    expect(validateSetup(form({ method: "bkw", target_n: 17 }))).toHaveProperty("target_n");
  });

  test("block size defaults to half the initial cohort", () => {
    expect(validateSetup(form({ block_size: null }))).toEqual({});
    expect(validateSetup(form({ n0: 2, block_size: null }))).toHaveProperty("block_size");
  });
});

describe("parsers", () => {
  test("covariate names split on commas and trim", () => {
    expect(parseCovariateNames("age, pdl1 score ,hb")).toEqual(["age", "pdl1 score", "hb"]);
  });

  test("gamma range accepts lo:hi and a single point", () => {
    expect(parseGammaRange("0.5:4")).toEqual([0.5, 4]);
    expect(parseGammaRange("2")).toEqual([2, 2]);
  });
});
