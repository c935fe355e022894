#!/usr/bin/env node
/**
 * plot --in <csv> --kind <kind> --out <file.svg>
 */

import { readFileSync, writeFileSync } from "fs";
import { CsvError } from "./csv";
import { KINDS, Kind, render } from "./charts";

function usage(): string {
  return `usage: plot --in <csv> --kind <${KINDS.join("|")}> --out <file.svg>`;
}

export function main(argv: string[]): number {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const val = argv[i + 1];
    if (!key?.startsWith("--") || val === undefined) {
      process.stderr.write(usage() + "\n");
      return 2;
    }
    args.set(key.slice(2), val);
  }
  const input = args.get("in");
  const kind = args.get("kind") as Kind | undefined;
  const out = args.get("out");
  if (!input || !kind || !out) {
    process.stderr.write(usage() + "\n");
    return 2;
  }
  if (!KINDS.includes(kind)) {
    process.stderr.write(`unknown kind '${kind}'; expected one of ${KINDS.join(", ")}\n`);
    return 2;
  }
  let text: string;
  try {
    text = readFileSync(input, "utf-8");
  } catch (e) {
    process.stderr.write(`cannot read ${input}: ${(e as Error).message}\n`);
    return 1;
  }
  let svg: string;
  try {
    svg = render(kind, text);
  } catch (e) {
    if (e instanceof CsvError) {
      process.stderr.write(`bad input: ${e.message}\n`);
      return 1;
    }
    throw e;
  }
  writeFileSync(out, svg);
  process.stdout.write(out + "\n");
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
