/**
 * Parser for the simulator's schema-1 CSVs.
 *
 * Metric files:  `# schema=1` + header scheme,seed,sweep,sweep_value,trials,metric,value
 * EXIT files:    `# schema=1` + header component,i_a,i_e,step
 */

export interface MetricRow {
  scheme: string;
  seed: number;
  sweep: string;
  sweepValue: number;
  trials: number;
  metric: string;
  value: number;
}

export interface ExitRow {
  component: "detector" | "decoder" | "trajectory";
  iA: number;
  iE: number;
  step: number | null;
}

export class CsvError extends Error {}

const METRIC_HEADER = "scheme,seed,sweep,sweep_value,trials,metric,value";
const EXIT_HEADER = "component,i_a,i_e,step";

function splitLines(text: string): string[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length < 2) {
    throw new CsvError("empty CSV");
  }
  if (lines[0].trim() !== "# schema=1") {
    throw new CsvError(`schema mismatch: expected '# schema=1', got '${lines[0]}'`);
  }
  return lines;
}

export function parseMetricCsv(text: string): MetricRow[] {
  const lines = splitLines(text);
  if (lines[1].trim() !== METRIC_HEADER) {
    throw new CsvError(`unexpected header '${lines[1]}'; this is not a metric CSV`);
  }
  const rows: MetricRow[] = [];
  for (let i = 2; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== 7) {
      throw new CsvError(`line ${i + 1}: expected 7 fields, got ${parts.length}`);
    }
    const [scheme, seed, sweep, sweepValue, trials, metric, value] = parts;
    rows.push({
      scheme,
      seed: Number(seed),
      sweep,
      sweepValue: Number(sweepValue),
      trials: Number(trials),
      metric,
      value: Number(value),
    });
  }
  if (rows.length === 0) {
    throw new CsvError("metric CSV has no data rows");
  }
  return rows;
}

export function parseExitCsv(text: string): ExitRow[] {
  const lines = splitLines(text);
  if (lines[1].trim() !== EXIT_HEADER) {
    throw new CsvError(`unexpected header '${lines[1]}'; this is not an EXIT CSV`);
  }
  const rows: ExitRow[] = [];
  for (let i = 2; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== 4) {
      throw new CsvError(`line ${i + 1}: expected 4 fields, got ${parts.length}`);
    }
    const [component, iA, iE, step] = parts;
    if (component !== "detector" && component !== "decoder" && component !== "trajectory") {
      throw new CsvError(`line ${i + 1}: unknown component '${component}'`);
    }
    rows.push({
      component,
      iA: Number(iA),
      iE: Number(iE),
      step: step === "" ? null : Number(step),
    });
  }
  if (rows.length === 0) {
    throw new CsvError("EXIT CSV has no data rows");
  }
  return rows;
}

/** Pull one metric as per-scheme series ordered by sweep value. */
export function seriesByScheme(
  rows: MetricRow[],
  metric: string
): Map<string, Array<{ x: number; y: number }>> {
  const out = new Map<string, Array<{ x: number; y: number }>>();
  for (const r of rows) {
    if (r.metric !== metric) continue;
    if (!out.has(r.scheme)) out.set(r.scheme, []);
    out.get(r.scheme)!.push({ x: r.sweepValue, y: r.value });
  }
  for (const pts of out.values()) {
    pts.sort((a, b) => a.x - b.x);
  }
  return out;
}
