import { execFileSync } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import * as tf from "@tensorflow/tfjs";

export function tmpDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

/** Run the Python event toolkit CLI (the only way this package uses it). */
export function evlume(...args: string[]): string {
  return execFileSync("python3", ["-m", "evlume", ...args], { encoding: "utf8" });
}

/** Write a key=value scene file the simulator understands. */
export function writeScene(path: string, entries: Record<string, string | number>): void {
  const lines = Object.keys(entries)
    .sort()
    .map((k) => `${k} = ${entries[k]}`);
  writeFileSync(path, lines.join("\n") + "\n");
}

export function writeJson(path: string, value: unknown): void {
  writeFileSync(path, JSON.stringify(value, null, 2) + "\n");
}

/**
 * A step-edge scene whose post-step photoreceptor cutoff sits exactly at
 * 1/(2*pi*tau): the low-light regime that produces trailing events.
 */
export function trailingScene(tauUs: number, size = 8, stepTUs = 400): Record<string, number | string> {
  const stepLog = 1.05;
  const postLux = 1 / (2 * Math.PI * (tauUs * 1e-6)) / 100;
  return {
    width: size,
    height: size,
    pattern: "step",
    duration_us: stepTUs + Math.ceil(2.2 * tauUs) + 200,
    step_t_us: stepTUs,
    step_log: stepLog,
    ambient_lux: postLux / Math.exp(stepLog),
  };
}

/** Strided data copy -> plain array (for expect comparisons). */
export function toArray(t: tf.Tensor): number[] {
  return Array.from(t.dataSync());
}

export function maxAbsDiff(a: tf.Tensor, b: tf.Tensor): number {
  return tf.tidy(() => tf.max(tf.abs(tf.sub(a, b))).dataSync()[0]);
}
