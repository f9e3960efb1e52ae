// Client-side mirror of the service's configuration rules. The server stays
// authoritative; this only catches obvious mistakes before a round trip.

export interface TrialSetupForm {
  covariates: string[];
  method: string;
  target_n: number;
  n0: number;
  block_size: number | null;
  p0: number;
  categories: number;
  rho: number;
  gamma_range: [number, number];
  seed: number | null;
}

export const METHODS = ["ps", "nt", "mh", "bkw"] as const;

export function validateSetup(form: TrialSetupForm): Record<string, string> {
  const problems: Record<string, string> = {};
  if (form.covariates.length === 0) {
    problems.covariates = "name at least one covariate";
  } else if (new Set(form.covariates).size !== form.covariates.length) {
    problems.covariates = "covariate names must be distinct";
  } else if (form.covariates.some((name) => name.length === 0)) {
    problems.covariates = "covariate names cannot be blank";
  }
  if (!METHODS.includes(form.method as (typeof METHODS)[number])) {
    problems.method = `unknown method ${form.method}`;
  }
  if (!Number.isInteger(form.target_n) || form.target_n < 1) {
    problems.target_n = "planned size must be a positive integer";
  }
  if (!Number.isInteger(form.n0) || form.n0 < 0) {
    problems.n0 = "initial cohort must be a nonnegative integer";
  } else if (form.n0 >= form.target_n) {
    problems.n0 = "initial cohort must be smaller than the planned size";
  }
  const block = form.block_size ?? Math.floor(form.n0 / 2);
  if (!Number.isInteger(block) || block < 2 || block % 2 !== 0) {
    problems.block_size = "block size must be an even integer >= 2";
  } else if (form.n0 % block !== 0) {
    problems.block_size = `initial cohort ${form.n0} is not divisible by block size ${block}`;
  }
  if (!(form.p0 >= 0.5 && form.p0 <= 1)) {
    problems.p0 = "coin probability must lie in [0.5, 1]";
  }
  if (!Number.isInteger(form.categories) || form.categories < 2) {
    problems.categories = "need at least 2 categories";
  }
  if (!(form.rho >= 0)) {
    problems.rho = "SD weight must be >= 0";
  }
  const [lo, hi] = form.gamma_range;
  if (!(lo > 0 && lo <= hi && Number.isFinite(hi))) {
    problems.gamma = "uncertainty range needs 0 < lo <= hi";
  }
  if (form.method === "bkw" && form.target_n % 2 !== 0) {
    problems.target_n = "the robust method needs an even planned size";
  }
  return problems;
}

export function parseCovariateNames(raw: string): string[] {
  return raw
    .split(",")
    .map((name) => name.trim())
    .filter((name, index, all) => name.length > 0 || all.length === 1);
}

export function parseGammaRange(raw: string): [number, number] {
  const [lo, hi] = raw.split(":");
  const low = Number(lo);
  const high = hi === undefined || hi.trim() === "" ? low : Number(hi);
  return [low, high];
}
