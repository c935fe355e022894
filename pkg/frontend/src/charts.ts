/**
 * Chart builders: each consumes parsed schema-1 rows and produces an SVG
 * string. Missing sweep points stay gaps; nothing is interpolated.
 */

import {
  CsvError,
  ExitRow,
  MetricRow,
  parseExitCsv,
  parseMetricCsv,
  seriesByScheme,
} from "./csv";
import {
  HEIGHT,
  MARGIN,
  PALETTE,
  SvgDoc,
  frame,
  legend,
  linearScale,
  log10Scale,
  WIDTH,
} from "./svg";

export const KINDS = [
  "ber_semilog",
  "mse_crlb",
  "sync_time",
  "exit_chart",
  "iteration_convergence",
  "bar_compare",
] as const;

export type Kind = (typeof KINDS)[number];

const X0 = MARGIN.left;
const X1 = WIDTH - MARGIN.right;
const Y0 = HEIGHT - MARGIN.bottom;
const Y1 = MARGIN.top;

function requireSeries(
  rows: MetricRow[],
  metric: string
): Map<string, Array<{ x: number; y: number }>> {
  const series = seriesByScheme(rows, metric);
  if (series.size === 0) {
    throw new CsvError(`CSV has no '${metric}' rows`);
  }
  return series;
}

function floorPositive(values: number[], fallback: number): number {
  const pos = values.filter((v) => v > 0);
  return pos.length ? Math.min(...pos) : fallback;
}

/** Semilog BER curves, one series per scheme. */
export function berSemilog(text: string, metric = "ber", yLabel = "bit error rate"): string {
  const rows = parseMetricCsv(text);
  const series = requireSeries(rows, metric);
  const allX = [...series.values()].flat().map((p) => p.x);
  const allY = [...series.values()].flat().map((p) => p.y);
  const yFloor = floorPositive(allY, 1e-7) / 2;
  const xs = linearScale(Math.min(...allX), Math.max(...allX), X0, X1);
  const ys = log10Scale(yFloor, Math.max(Math.max(...allY), yFloor * 10), Y0, Y1);
  const sweep = rows[0].sweep;
  const f = frame(xs, ys, `${yLabel} vs ${sweep}`, sweep, yLabel);
  const entries: Array<{ label: string; color: string }> = [];
  let i = 0;
  for (const [scheme, pts] of series) {
    const color = PALETTE[i++ % PALETTE.length];
    const drawable = pts.map((p) => ({ x: xs(p.x), y: ys(Math.max(p.y, yFloor)) }));
    f.doc.path(drawable, color, 1.6);
    for (const p of drawable) f.doc.circle(p.x, p.y, 2.4, color);
    entries.push({ label: scheme, color });
  }
  legend(f.doc, entries);
  return f.doc.render();
}

/** Delay-estimation MSE per scheme with the CRLB reference line. */
export function mseCrlb(text: string): string {
  const rows = parseMetricCsv(text);
  const mse = requireSeries(rows, "delay_mse");
  const bound = seriesByScheme(rows, "delay_var_bound").get("crlb");
  if (!bound || bound.length === 0) {
    throw new CsvError("CSV has no CRLB reference rows (scheme 'crlb', metric 'delay_var_bound')");
  }
  const pts = [...mse.values()].flat().concat(bound);
  const xs = linearScale(
    Math.min(...pts.map((p) => p.x)),
    Math.max(...pts.map((p) => p.x)),
    X0,
    X1
  );
  const yFloor = floorPositive(pts.map((p) => p.y), 1e-8) / 2;
  const ys = log10Scale(yFloor, Math.max(...pts.map((p) => p.y)) * 2, Y0, Y1);
  const sweep = rows[0].sweep;
  const f = frame(xs, ys, `delay MSE and CRLB vs ${sweep}`, sweep, "delay variance (slots^2)");
  const entries: Array<{ label: string; color: string; dash?: string }> = [];
  let i = 0;
  for (const [scheme, sp] of mse) {
    const color = PALETTE[i++ % PALETTE.length];
    const drawable = sp.map((p) => ({ x: xs(p.x), y: ys(Math.max(p.y, yFloor)) }));
    f.doc.path(drawable, color, 1.6);
    for (const p of drawable) f.doc.circle(p.x, p.y, 2.4, color);
    entries.push({ label: scheme, color });
  }
  const bd = bound.map((p) => ({ x: xs(p.x), y: ys(Math.max(p.y, yFloor)) }));
  f.doc.path(bd, "#000000", 1.4, "6,4");
  entries.push({ label: "CRLB", color: "#000000", dash: "6,4" });
  legend(f.doc, entries);
  return f.doc.render();
}

/** Mean frames-to-all-verified per scheme. */
export function syncTime(text: string): string {
  const rows = parseMetricCsv(text);
  const series = requireSeries(rows, "sync_time_mean");
  const pts = [...series.values()].flat();
  const xs = linearScale(
    Math.min(...pts.map((p) => p.x)),
    Math.max(...pts.map((p) => p.x)),
    X0,
    X1
  );
  const ys = linearScale(0, Math.max(...pts.map((p) => p.y)) * 1.15, Y0, Y1);
  const sweep = rows[0].sweep;
  const f = frame(xs, ys, `synchronization time vs ${sweep}`, sweep, "frames to all users verified");
  const entries: Array<{ label: string; color: string }> = [];
  let i = 0;
  for (const [scheme, sp] of series) {
    const color = PALETTE[i++ % PALETTE.length];
    const drawable = sp.map((p) => ({ x: xs(p.x), y: ys(p.y) }));
    f.doc.path(drawable, color, 1.6);
    for (const p of drawable) f.doc.circle(p.x, p.y, 2.4, color);
    entries.push({ label: scheme, color });
  }
  legend(f.doc, entries);
  return f.doc.render();
}

/** Detector/decoder transfer curves plus the alternating trajectory. */
export function exitChart(text: string): string {
  const rows: ExitRow[] = parseExitCsv(text);
  const det = rows.filter((r) => r.component === "detector");
  const dec = rows.filter((r) => r.component === "decoder");
  const traj = rows
    .filter((r) => r.component === "trajectory")
    .sort((a, b) => (a.step ?? 0) - (b.step ?? 0));
  if (det.length === 0 || dec.length === 0) {
    throw new CsvError("EXIT CSV must contain detector and decoder curves");
  }
  const xs = linearScale(0, 1, X0, X1);
  const ys = linearScale(0, 1, Y0, Y1);
  const f = frame(xs, ys, "EXIT chart", "detector input I_A / decoder output I_E", "detector output I_E / decoder input I_A");
  // detector: (I_A, I_E); decoder drawn transposed so the staircase walks
  // between the two curves
  f.doc.path(det.map((r) => ({ x: xs(r.iA), y: ys(r.iE) })), PALETTE[0], 1.8);
  f.doc.path(dec.map((r) => ({ x: xs(r.iE), y: ys(r.iA) })), PALETTE[1], 1.8);
  if (traj.length > 1) {
    const steps: Array<{ x: number; y: number }> = [];
    for (const r of traj) {
      steps.push({ x: xs(r.iA), y: ys(r.iE) });
    }
    f.doc.path(steps, "#333333", 1.1, "3,3");
    for (const p of steps) f.doc.circle(p.x, p.y, 1.8, "#333333");
  }
  legend(f.doc, [
    { label: "detector transfer", color: PALETTE[0] },
    { label: "decoder transfer (transposed)", color: PALETTE[1] },
    { label: "trajectory", color: "#333333", dash: "3,3" },
  ]);
  return f.doc.render();
}

/** BER against receiver iteration, one series per (scheme, sweep value). */
export function iterationConvergence(text: string): string {
  const rows = parseMetricCsv(text);
  const iterRows = rows.filter((r) => /^ber_iter_\d+$/.test(r.metric));
  if (iterRows.length === 0) {
    throw new CsvError("CSV has no 'ber_iter_N' rows");
  }
  const byKey = new Map<string, Array<{ x: number; y: number }>>();
  for (const r of iterRows) {
    const key = `${r.scheme} @ ${r.sweepValue}`;
    if (!byKey.has(key)) byKey.set(key, []);
    byKey.get(key)!.push({ x: Number(r.metric.slice("ber_iter_".length)), y: r.value });
  }
  for (const pts of byKey.values()) pts.sort((a, b) => a.x - b.x);
  const pts = [...byKey.values()].flat();
  const xs = linearScale(1, Math.max(...pts.map((p) => p.x)), X0, X1);
  const yFloor = floorPositive(pts.map((p) => p.y), 1e-7) / 2;
  const ys = log10Scale(yFloor, Math.max(...pts.map((p) => p.y)) * 2, Y0, Y1);
  const f = frame(xs, ys, "convergence of the iterative receiver", "iteration", "bit error rate");
  const entries: Array<{ label: string; color: string }> = [];
  let i = 0;
  for (const [key, sp] of byKey) {
    const color = PALETTE[i++ % PALETTE.length];
    f.doc.path(sp.map((p) => ({ x: xs(p.x), y: ys(Math.max(p.y, yFloor)) })), color, 1.6);
    entries.push({ label: key, color });
  }
  legend(f.doc, entries);
  return f.doc.render();
}

/** Grouped bars of one metric (default detected bits per frame). */
export function barCompare(text: string, metric = "detected_bits_per_frame"): string {
  const rows = parseMetricCsv(text);
  const series = requireSeries(rows, metric);
  const sweeps = [...new Set(rows.filter((r) => r.metric === metric).map((r) => r.sweepValue))].sort(
    (a, b) => a - b
  );
  const schemes = [...series.keys()];
  const maxV = Math.max(...[...series.values()].flat().map((p) => p.y));
  const ys = linearScale(0, maxV * 1.15, Y0, Y1);
  const xs = linearScale(0, sweeps.length, X0, X1);
  const doc = new SvgDoc();
  const f = frame(xs, ys, `${metric} by ${rows[0].sweep}`, rows[0].sweep, metric);
  // override numeric x tick labels with the sweep values
  const group = (X1 - X0) / sweeps.length;
  const bar = (group * 0.8) / schemes.length;
  schemes.forEach((scheme, si) => {
    const color = PALETTE[si % PALETTE.length];
    for (const p of series.get(scheme)!) {
      const gi = sweeps.indexOf(p.x);
      const x = X0 + gi * group + group * 0.1 + si * bar;
      f.doc.rect(x, ys(p.y), bar - 2, Y0 - ys(p.y), color);
    }
  });
  sweeps.forEach((v, gi) => {
    f.doc.text(X0 + gi * group + group / 2, Y0 + 30, String(v), { anchor: "middle", size: 11 });
  });
  legend(f.doc, schemes.map((s, i) => ({ label: s, color: PALETTE[i % PALETTE.length] })));
  return f.doc.render();
}

export function render(kind: Kind, csvText: string): string {
  switch (kind) {
    case "ber_semilog":
      return berSemilog(csvText);
    case "mse_crlb":
      return mseCrlb(csvText);
    case "sync_time":
      return syncTime(csvText);
    case "exit_chart":
      return exitChart(csvText);
    case "iteration_convergence":
      return iterationConvergence(csvText);
    case "bar_compare":
      return barCompare(csvText);
  }
}
