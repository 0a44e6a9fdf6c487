/**
 * PDF to interchange JSON conversion, wrapping the pdf2json layout parser.
 *
 * The adapter linearizes each page's text runs in reading order (top to
 * bottom, left to right), renders column-aligned line blocks as markdown
 * tables, and never re-orders or interprets content beyond that. pdf2json
 * exposes no embedded image payloads, so image elements are only emitted
 * when the underlying parser ever provides them.
 */

import path from "node:path";
import PDFParser, { Output, Page, Text } from "pdf2json";

import { ConversionOptions, normalizeOptions } from "./options.js";

export interface TableDims {
  rows: number;
  cols: number;
}

export interface InterchangeElement {
  kind: "text" | "table" | "image";
  page: number;
  markdown: string;
  image_ref?: string;
  caption?: string;
  table_dims?: TableDims;
}

export interface InterchangeDocument {
  file_name: string;
  elements: InterchangeElement[];
}

export class UnreadablePdf extends Error {}

export class ConverterFailure extends Error {}

/** One visual line: text cells at ascending x. */
interface Line {
  y: number;
  cells: { x: number; text: string }[];
}

const LINE_Y_TOLERANCE = 0.4; // page units; same-line items differ less than this
const PARAGRAPH_GAP_FACTOR = 1.8; // gap beyond this multiple of the median advance

function decodeRuns(item: Text): string {
  return item.R.map((run) => decodeURIComponent(run.T)).join("");
}

function groupLines(texts: Text[]): Line[] {
  const sorted = [...texts].sort((a, b) => a.y - b.y || a.x - b.x);
  const lines: Line[] = [];
  for (const item of sorted) {
    const content = decodeRuns(item);
    if (!content.trim()) continue;
    const current = lines[lines.length - 1];
    if (current && Math.abs(item.y - current.y) < LINE_Y_TOLERANCE) {
      current.cells.push({ x: item.x, text: content });
    } else {
      lines.push({ y: item.y, cells: [{ x: item.x, text: content }] });
    }
  }
  for (const line of lines) {
    line.cells.sort((a, b) => a.x - b.x);
  }
  return lines;
}

function lineText(line: Line): string {
  return line.cells.map((c) => c.text.trim()).join(" ").trim();
}

function medianAdvance(lines: Line[]): number {
  const gaps = lines.slice(1).map((line, i) => line.y - lines[i].y).filter((g) => g > 0);
  if (!gaps.length) return Number.POSITIVE_INFINITY;
  gaps.sort((a, b) => a - b);
  return gaps[Math.floor(gaps.length / 2)];
}

function toMarkdownTable(block: Line[]): { markdown: string; dims: TableDims } {
  const cols = Math.max(...block.map((l) => l.cells.length));
  const rows = block.map((line) => {
    const cells = line.cells.map((c) => c.text.trim().replace(/\|/g, "\\|"));
    while (cells.length < cols) cells.push("");
    return `| ${cells.join(" | ")} |`;
  });
  const separator = `| ${Array(cols).fill("---").join(" | ")} |`;
  const markdown = [rows[0], separator, ...rows.slice(1)].join("\n");
  return { markdown, dims: { rows: block.length, cols } };
}

/**
 * Split a page's lines into text runs and table blocks. A table block is a
 * maximal run of consecutive multi-cell lines at least minTableRows long.
 */
function pageElements(page: Page, pageNumber: number, options: ConversionOptions): InterchangeElement[] {
  const lines = groupLines(page.Texts ?? []);
  if (!lines.length) return [];
  const advance = medianAdvance(lines);

  const elements: InterchangeElement[] = [];
  let textBuffer: string[] = [];
  let previousY: number | null = null;

  const flushText = () => {
    const markdown = textBuffer.join("").trim();
    if (markdown) {
      elements.push({ kind: "text", page: pageNumber, markdown });
    }
    textBuffer = [];
  };

  let i = 0;
  while (i < lines.length) {
    if (lines[i].cells.length >= 2) {
      let j = i;
      while (j < lines.length && lines[j].cells.length >= 2) j += 1;
      const block = lines.slice(i, j);
      if (block.length >= options.minTableRows) {
        flushText();
        const { markdown, dims } = toMarkdownTable(block);
        elements.push({ kind: "table", page: pageNumber, markdown, table_dims: dims });
        previousY = lines[j - 1].y;
        i = j;
        continue;
      }
    }
    const line = lines[i];
    if (textBuffer.length && previousY !== null) {
      const gap = line.y - previousY;
      textBuffer.push(gap > PARAGRAPH_GAP_FACTOR * advance ? "\n\n" : "\n");
    }
    textBuffer.push(lineText(line));
    previousY = line.y;
    i += 1;
  }
  flushText();
  return elements;
}

/**
 * Run a task with stdout diverted to stderr. The wrapped parser logs worker
 * warnings through a console bound at import time, so the stream itself is
 * patched; keeps CLI stdout pure JSON.
 */
export async function withQuietStdout<T>(task: () => Promise<T>): Promise<T> {
  const write = process.stdout.write.bind(process.stdout);
  (process.stdout as any).write = (chunk: any, ...rest: any[]) =>
    (process.stderr.write as any)(chunk, ...rest);
  try {
    return await task();
  } finally {
    (process.stdout as any).write = write;
  }
}

function parsePdf(filePath: string): Promise<Output> {
  return new Promise<Output>((resolve, reject) => {
    const parser = new PDFParser();
    parser.on("pdfParser_dataError", (err: any) => {
      const message = err?.parserError?.message ?? err?.parserError ?? String(err);
      reject(new UnreadablePdf(`${filePath}: ${message}`));
    });
    parser.on("pdfParser_dataReady", (data: Output) => resolve(data));
    try {
      parser.loadPDF(filePath);
    } catch (err) {
      reject(new ConverterFailure(`${filePath}: ${String(err)}`));
    }
  });
}

export async function convertPdf(
  filePath: string,
  partialOptions?: Partial<ConversionOptions>,
): Promise<InterchangeDocument> {
  const options = normalizeOptions(partialOptions);
  let output: Output;
  try {
    output = await parsePdf(filePath);
  } catch (err) {
    if (err instanceof UnreadablePdf || err instanceof ConverterFailure) throw err;
    throw new ConverterFailure(`${filePath}: ${String(err)}`);
  }

  const elements: InterchangeElement[] = [];
  (output.Pages ?? []).forEach((page, index) => {
    const pageNumber = index + 1;
    const range = options.pageRange;
    if (range && (pageNumber < range.start || pageNumber > range.end)) return;
    elements.push(...pageElements(page, pageNumber, options));
  });

  return { file_name: path.basename(filePath), elements };
}
