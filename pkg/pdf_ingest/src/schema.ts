/**
 * Validation against the engine's published interchange JSON-Schema (the
 * adapter's only coupling to the engine). The schema file is looked up from
 * EWS_INTERCHANGE_SCHEMA or the repository's docs/ directory.
 */

import fs from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { Ajv2020 } from "ajv/dist/2020.js";
import type { ValidateFunction } from "ajv";

import { InterchangeDocument } from "./convert.js";

function schemaPath(): string {
  const fromEnv = process.env.EWS_INTERCHANGE_SCHEMA;
  if (fromEnv) return fromEnv;
  const here = path.dirname(fileURLToPath(import.meta.url));
  return path.resolve(here, "..", "..", "docs", "interchange.schema.json");
}

let compiled: ValidateFunction | null = null;

export function validateDocument(doc: InterchangeDocument): string[] {
  if (!compiled) {
    const schema = JSON.parse(fs.readFileSync(schemaPath(), "utf-8"));
    const ajv = new Ajv2020({ allErrors: true });
    compiled = ajv.compile(schema);
  }
  if (compiled(doc)) return [];
  return (compiled.errors ?? []).map((e) => `${e.instancePath || "/"} ${e.message}`);
}
