import fs from "node:fs";
import path from "node:path";

import { ConversionOptions, normalizeOptions } from "./options.js";
import { convertPdf } from "./convert.js";
import { validateDocument } from "./schema.js";

export interface BatchSummary {
  converted: number;
  failed: number;
  outputs: string[];
  failures: { file: string; error: string }[];
}

/**
 * Convert every *.pdf in a directory; one JSON per input. A failing file is
 * recorded in the summary and never aborts the batch.
 */
export async function batchConvert(
  inDir: string,
  outDir: string,
  partialOptions?: Partial<ConversionOptions>,
): Promise<BatchSummary> {
  const options = normalizeOptions(partialOptions);
  fs.mkdirSync(outDir, { recursive: true });
  const pdfs = fs
    .readdirSync(inDir)
    .filter((name) => name.toLowerCase().endsWith(".pdf"))
    .sort();

  const summary: BatchSummary = { converted: 0, failed: 0, outputs: [], failures: [] };
  for (const name of pdfs) {
    const source = path.join(inDir, name);
    try {
      const doc = await convertPdf(source, options);
      const problems = validateDocument(doc);
      if (problems.length) {
        throw new Error(`schema violations: ${problems.join("; ")}`);
      }
      const target = path.join(outDir, `${path.parse(name).name}.json`);
      fs.writeFileSync(target, JSON.stringify(doc, null, 2) + "\n", "utf-8");
      summary.converted += 1;
      summary.outputs.push(target);
    } catch (err) {
      summary.failed += 1;
      summary.failures.push({ file: name, error: err instanceof Error ? err.message : String(err) });
    }
  }
  return summary;
}
