#!/usr/bin/env node
/**
 * convert <pdf|dir> --out <dir> [--no-images] [--pages a:b]
 *
 * Converts one PDF or every PDF in a directory to interchange JSON and
 * prints a JSON summary to stdout. Exit codes: 0 success (batch mode also
 * when some files fail; see the summary), 1 single-file conversion failure,
 * 2 usage error.
 */

import fs from "node:fs";
import path from "node:path";

import { batchConvert } from "./batch.js";
import { convertPdf, withQuietStdout } from "./convert.js";
import { OptionsError, PageRange, parsePageRange } from "./options.js";
import { validateDocument } from "./schema.js";

interface CliArgs {
  source: string;
  out: string;
  includeImages: boolean;
  pageRange?: PageRange;
}

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error("usage: ews-pdf-ingest convert <pdf|dir> --out <dir> [--no-images] [--pages a:b]");
  process.exit(2);
}

function parseArgs(argv: string[]): CliArgs {
  if (argv[0] !== "convert") usage(`unknown command ${argv[0] ?? "(none)"}`);
  const rest = argv.slice(1);
  let source: string | undefined;
  let out: string | undefined;
  let includeImages = true;
  let pageRange: PageRange | undefined;
  for (let i = 0; i < rest.length; i += 1) {
    const arg = rest[i];
    if (arg === "--out") {
      out = rest[++i];
    } else if (arg === "--no-images") {
      includeImages = false;
    } else if (arg === "--pages") {
      try {
        pageRange = parsePageRange(rest[++i] ?? "");
      } catch (err) {
        usage(err instanceof Error ? err.message : String(err));
      }
    } else if (!arg.startsWith("-") && source === undefined) {
      source = arg;
    } else {
      usage(`unexpected argument ${arg}`);
    }
  }
  if (!source || !out) usage("both a source and --out are required");
  return { source, out, includeImages, pageRange };
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  const options = { includeImages: args.includeImages, pageRange: args.pageRange };

  let stats: fs.Stats;
  try {
    stats = fs.statSync(args.source);
  } catch {
    usage(`source ${args.source} does not exist`);
  }

  if (stats.isDirectory()) {
    const summary = await withQuietStdout(() => batchConvert(args.source, args.out, options));
    console.log(JSON.stringify(summary, null, 2));
    return 0;
  }

  try {
    const doc = await withQuietStdout(() => convertPdf(args.source, options));
    const problems = validateDocument(doc);
    if (problems.length) {
      console.error(`error: output violates the interchange schema: ${problems.join("; ")}`);
      return 1;
    }
    fs.mkdirSync(args.out, { recursive: true });
    const target = path.join(args.out, `${path.parse(args.source).name}.json`);
    fs.writeFileSync(target, JSON.stringify(doc, null, 2) + "\n", "utf-8");
    console.log(JSON.stringify({ converted: 1, failed: 0, outputs: [target], failures: [] }, null, 2));
    return 0;
  } catch (err) {
    if (err instanceof OptionsError) usage(err.message);
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
    return 1;
  }
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err}`);
    process.exit(1);
  },
);
