import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";
import { DensityGatedCell } from "../src/cells.js";
import { DualMemoryEncoder, disposeState } from "../src/encoder.js";
import { toArray } from "./helpers.js";

describe("dual-memory encoder", () => {
  it("starts from all-zero state", () => {
    const enc = new DualMemoryEncoder(2, { widths: [4, 6, 8], seed: 1 });
    const state = enc.zeroState(1, 16, 16);
    expect(state.memory).toBeNull();
    expect(state.cells).toHaveLength(3);
    state.cells.forEach((s, l) => {
      const side = 16 >> l;
      expect(s.c.shape).toEqual([1, side, side, [4, 6, 8][l]]);
      toArray(s.c).forEach((v) => expect(v).toBe(0));
      toArray(s.h).forEach((v) => expect(v).toBe(0));
    });
    disposeState(state);
  });

  it("produces a feature pyramid and a top-scale memory", () => {
    const enc = new DualMemoryEncoder(2, { widths: [4, 6, 8], seed: 1 });
    const x = tf.randomNormal([1, 16, 16, 2], 0, 1, "float32", 5) as tf.Tensor4D;
    const out = enc.step(x, enc.zeroState(1, 16, 16));
    expect(out.features.map((f) => f.shape)).toEqual([
      [1, 16, 16, 4], [1, 8, 8, 6], [1, 4, 4, 8],
    ]);
    expect(out.state.memory?.shape).toEqual([1, 4, 4, 8]);
    x.dispose();
  });

  it("changes its outputs when the memory path is zeroed", () => {
    const enc = new DualMemoryEncoder(2, { widths: [4, 6, 8], seed: 3 });
    const xs = [0, 1, 2].map(
      (k) => tf.randomNormal([1, 8, 8, 2], 0, 1, "float32", 50 + k) as tf.Tensor4D,
    );
    let full = enc.zeroState(1, 8, 8);
    let cut = enc.zeroState(1, 8, 8);
    let lastFull: tf.Tensor4D | null = null;
    let lastCut: tf.Tensor4D | null = null;
    for (const x of xs) {
      const a = enc.step(x, full);
      const b = enc.step(x, cut, true);
      full = a.state;
      cut = b.state;
      lastFull = a.features[0];
      lastCut = b.features[0];
    }
    const gap = tf.tidy(() =>
      tf.max(tf.abs(tf.sub(lastFull as tf.Tensor4D, lastCut as tf.Tensor4D))).dataSync()[0],
    );
    expect(gap).toBeGreaterThan(1e-4);
    // The ablated run carries no memory between steps.
    expect(cut.memory).toBeNull();
    expect(full.memory).not.toBeNull();
  });

  it("reduces to a bare cell with one scale and no memory", () => {
    const enc = new DualMemoryEncoder(3, {
      scales: 1, widths: [5], memory: false, seed: 9,
    });
    const cell = new DensityGatedCell(3, 5, 9);
    let encState = enc.zeroState(1, 7, 7);
    let cellState = cell.zeroState(1, 7, 7);
    for (let step = 0; step < 4; step++) {
      const x = tf.randomNormal([1, 7, 7, 3], 0, 1, "float32", 70 + step) as tf.Tensor4D;
      const a = enc.step(x, encState);
      const b = cell.forward(x, cellState);
      encState = a.state;
      cellState = b.state;
      const eh = toArray(a.features[0]);
      const bh = toArray(b.state.h);
      eh.forEach((v, i) => expect(v).toBe(bh[i]));
      const ec = toArray(a.state.cells[0].c);
      const bc = toArray(b.state.c);
      ec.forEach((v, i) => expect(v).toBe(bc[i]));
      x.dispose();
    }
  });

  it("matches cell seeds between configurations of equal shape", () => {
    // Same seed => identical cell kernels whether or not context blocks
    // are attached (they are separate parameter sets).
    const a = new DualMemoryEncoder(2, { scales: 1, widths: [4], memory: false, seed: 5 });
    const b = new DualMemoryEncoder(2, {
      scales: 1, widths: [4], memory: false, contextBlocks: false, seed: 5,
    });
    const ka = toArray(a.cells[0].gateKernel);
    const kb = toArray(b.cells[0].gateKernel);
    ka.forEach((v, i) => expect(v).toBe(kb[i]));
    expect(b.blocks).toHaveLength(0);
  });
});
