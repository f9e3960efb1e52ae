// Number rendering for the dashboards: never round below 3 decimals, trim
// trailing zeros beyond them, keep integers bare. 0.671 renders as "0.671".

export function fmt(value: number | null | undefined): string {
  if (value === null || value === undefined) return "n/a";
  if (!Number.isFinite(value)) return String(value);
  if (Number.isInteger(value)) return String(value);
  const fixed = value.toFixed(6);
  // trim trailing zeros but keep at least one decimal digit
  return fixed.replace(/(\.\d*?[1-9])0+$|\.0+$/u, (_, keep) => keep ?? "");
}

export function fmtPercentWidth(value: number, max: number): string {
  if (!(max > 0)) return "0.0";
  const pct = Math.min(100, (value / max) * 100);
  return pct.toFixed(1);
}
