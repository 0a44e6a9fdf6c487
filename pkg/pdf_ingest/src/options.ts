export interface PageRange {
  start: number;
  end: number;
}

export interface ConversionOptions {
  includeImages: boolean;
  minTableRows: number;
  pageRange?: PageRange;
}

export class OptionsError extends Error {}

export function normalizeOptions(partial?: Partial<ConversionOptions>): ConversionOptions {
  const options: ConversionOptions = {
    includeImages: partial?.includeImages ?? true,
    minTableRows: partial?.minTableRows ?? 1,
    pageRange: partial?.pageRange,
  };
  if (options.minTableRows < 1) {
    throw new OptionsError(`minTableRows must be >= 1, got ${options.minTableRows}`);
  }
  if (options.pageRange) {
    const { start, end } = options.pageRange;
    if (!Number.isInteger(start) || !Number.isInteger(end) || start < 1) {
      throw new OptionsError(`page range bounds must be positive integers, got ${start}:${end}`);
    }
    if (start > end) {
      throw new OptionsError(`page range start ${start} is after end ${end}`);
    }
  }
  return options;
}

export function parsePageRange(text: string): PageRange {
  const match = /^(\d+):(\d+)$/.exec(text.trim());
  if (!match) {
    throw new OptionsError(`page range must look like a:b, got ${text}`);
  }
  return { start: Number(match[1]), end: Number(match[2]) };
}
