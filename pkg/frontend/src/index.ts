export { parseMetricCsv, parseExitCsv, seriesByScheme, CsvError } from "./csv";
export { render, KINDS } from "./charts";
export type { Kind } from "./charts";
