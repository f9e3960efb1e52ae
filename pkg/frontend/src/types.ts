// Wire types of the allocation service (schema_version 1) plus runtime
// guards. The console trusts these payloads verbatim: every number it shows
// comes straight from a field checked here.

export interface MetricsPayload {
  covariates: string[];
  group_sizes: [number, number];
  abs_group_size_diff: number;
  abs_mean_diff: Record<string, number>;
  abs_sd_diff: Record<string, number>;
  energy: number | null;
  energy_p_value: number | null;
  cg_series: number[];
  mean_cg: number | null;
}

export interface StatePayload {
  schema_version: number;
  id: string;
  status: "recruiting" | "full";
  covariates: string[];
  target_n: number;
  n0: number;
  enrolled: number;
  group_sizes: [number, number];
  metrics: MetricsPayload;
  last_event: EnrollmentEvent | null;
}

export interface EnrollmentEvent {
  seq: number;
  subject_id: string;
  assignment: number;
  p_group1: number;
  phase: "block" | "adaptive";
  discrepancy: number | null;
  forced: boolean;
}

export interface ServiceErrorBody {
  code: string;
  message: string;
  detail?: Record<string, string> | null;
}

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const isNumOrNull = (v: unknown): v is number | null => v === null || isNum(v);
const isStringArray = (v: unknown): v is string[] =>
  Array.isArray(v) && v.every((x) => typeof x === "string");

function isNumberRecord(v: unknown): v is Record<string, number> {
  return (
    typeof v === "object" && v !== null && !Array.isArray(v) && Object.values(v).every(isNum)
  );
}

export function isMetricsPayload(v: unknown): v is MetricsPayload {
  if (typeof v !== "object" || v === null) return false;
  const m = v as Record<string, unknown>;
  return (
    isStringArray(m.covariates) &&
    Array.isArray(m.group_sizes) &&
    m.group_sizes.length === 2 &&
    m.group_sizes.every(isNum) &&
    isNum(m.abs_group_size_diff) &&
    isNumberRecord(m.abs_mean_diff) &&
    isNumberRecord(m.abs_sd_diff) &&
    isNumOrNull(m.energy) &&
    isNumOrNull(m.energy_p_value) &&
    Array.isArray(m.cg_series) &&
    m.cg_series.every(isNum) &&
    isNumOrNull(m.mean_cg)
  );
}

export function isStatePayload(v: unknown): v is StatePayload {
  if (typeof v !== "object" || v === null) return false;
  const s = v as Record<string, unknown>;
  return (
    isNum(s.schema_version) &&
    typeof s.id === "string" &&
    (s.status === "recruiting" || s.status === "full") &&
    isStringArray(s.covariates) &&
    isNum(s.target_n) &&
    isNum(s.n0) &&
    isNum(s.enrolled) &&
    Array.isArray(s.group_sizes) &&
    s.group_sizes.length === 2 &&
    s.group_sizes.every(isNum) &&
    isMetricsPayload(s.metrics)
  );
}

export function isEnrollmentEvent(v: unknown): v is EnrollmentEvent {
  if (typeof v !== "object" || v === null) return false;
  const e = v as Record<string, unknown>;
  return (
    isNum(e.seq) &&
    typeof e.subject_id === "string" &&
    isNum(e.assignment) &&
    isNum(e.p_group1) &&
    (e.phase === "block" || e.phase === "adaptive") &&
    isNumOrNull(e.discrepancy) &&
    typeof e.forced === "boolean"
  );
}
