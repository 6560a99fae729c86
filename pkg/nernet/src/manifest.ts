/**
 * Run manifests in the same shape the Python CLI writes: sorted keys,
 * two-space indent, sha256 per referenced file, no timestamps — rerunning
 * an identical job yields a byte-identical manifest.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";

export function sha256File(path: string): string {
  return createHash("sha256").update(readFileSync(path)).digest("hex");
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value !== null && typeof value === "object") {
    return Object.fromEntries(
      Object.entries(value as Record<string, unknown>)
        .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
        .map(([k, v]) => [k, sortKeys(v)]),
    );
  }
  return value;
}

export function stableStringify(value: unknown): string {
  return JSON.stringify(sortKeys(value), null, 2);
}

export interface FileRecord {
  format: string;
  sha256: string;
}

export function fileRecord(path: string, format: string): FileRecord {
  return { format, sha256: sha256File(path) };
}

export function writeManifest(path: string, record: unknown): void {
  writeFileSync(path, stableStringify(record) + "\n");
}
