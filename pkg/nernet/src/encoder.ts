/**
 * Multi-scale recurrent encoder with two kinds of state:
 *
 *  - per-scale cell state, carried horizontally through time inside each
 *    scale by a DensityGatedCell;
 *  - a shared memory map, updated vertically bottom -> top within a single
 *    step, then handed from the top scale at t-1 back to the bottom scale
 *    at t through a progressive upsampling chain (resize x2 + conv per hop).
 *
 * Each scale runs: [downsample conv] -> context block -> cell, with the
 * incoming memory concatenated onto the cell input so the memory path
 * actually shapes the features (the ablation tests rely on that).  With
 * memory and context blocks off and a single scale, `step` is exactly one
 * DensityGatedCell.forward call.
 */

import * as tf from "@tensorflow/tfjs";
import { CellState, CellStep, DensityGatedCell } from "./cells.js";
import { GlobalContextBlock } from "./blocks.js";
import { tidy } from "./tidy.js";

export interface EncoderOptions {
  /** number of scales (default 3: full, half, quarter resolution) */
  scales?: number;
  /** channel width per scale (default [16, 32, 64]) */
  widths?: number[];
  /** shared cross-scale memory path */
  memory?: boolean;
  /** density-damped forget gates in the cells */
  densityFeedback?: boolean;
  /** global-context block in front of each cell */
  contextBlocks?: boolean;
  seed?: number;
}

export interface EncoderState {
  cells: CellState[];
  /** top-scale memory from the previous step; null before the first step */
  memory: tf.Tensor4D | null;
}

export interface EncoderStep {
  /** per-scale hidden features, finest scale first */
  features: tf.Tensor4D[];
  state: EncoderState;
  /** per-scale gate details, finest scale first */
  steps: CellStep[];
}

function glorot(shape: number[], seed: number): tf.Tensor {
  return tf.initializers.glorotUniform({ seed }).apply(shape) as tf.Tensor;
}

export class DualMemoryEncoder {
  readonly inChannels: number;
  readonly widths: number[];
  readonly memory: boolean;
  readonly densityFeedback: boolean;
  readonly cells: DensityGatedCell[];
  readonly blocks: GlobalContextBlock[];
  readonly downKernels: tf.Variable[]; // scale l>0: stride-2 conv from h_{l-1}
  readonly downBiases: tf.Variable[];
  readonly liftKernels: tf.Variable[]; // memory bottom->top, stride 2
  readonly liftBiases: tf.Variable[];
  readonly memKernels: tf.Variable[]; // memory update from concat(h, memory-in)
  readonly memBiases: tf.Variable[];
  readonly hopKernels: tf.Variable[]; // top->bottom hand-off, one conv per 2x hop
  readonly hopBiases: tf.Variable[];

  constructor(inChannels: number, options: EncoderOptions = {}) {
    const scales = options.scales ?? 3;
    const widths = options.widths ?? [16, 32, 64];
    if (widths.length < scales) {
      throw new Error(`need ${scales} widths, got [${widths}]`);
    }
    const seed = options.seed ?? 0;
    this.inChannels = inChannels;
    this.widths = widths.slice(0, scales);
    this.memory = options.memory ?? true;
    this.densityFeedback = options.densityFeedback ?? true;

    const useGcb = options.contextBlocks ?? true;
    this.cells = [];
    this.blocks = [];
    this.downKernels = [];
    this.downBiases = [];
    this.liftKernels = [];
    this.liftBiases = [];
    this.memKernels = [];
    this.memBiases = [];
    this.hopKernels = [];
    this.hopBiases = [];

    for (let l = 0; l < scales; l++) {
      const featC = l === 0 ? inChannels : this.widths[l];
      if (l > 0) {
        this.downKernels.push(
          tf.variable(glorot([3, 3, this.widths[l - 1], featC], seed + 10 * l + 1)),
        );
        this.downBiases.push(tf.variable(tf.zeros([featC])));
      }
      if (useGcb) this.blocks.push(new GlobalContextBlock(featC, seed + 10 * l + 2));
      const cellIn = featC + (this.memory ? this.widths[l] : 0);
      this.cells.push(new DensityGatedCell(cellIn, this.widths[l], seed + 10 * l));
      if (this.memory) {
        this.memKernels.push(tf.variable(
          glorot([3, 3, 2 * this.widths[l], this.widths[l]], seed + 10 * l + 3),
        ));
        this.memBiases.push(tf.variable(tf.zeros([this.widths[l]])));
        if (l > 0) {
          this.liftKernels.push(tf.variable(
            glorot([3, 3, this.widths[l - 1], this.widths[l]], seed + 10 * l + 4),
          ));
          this.liftBiases.push(tf.variable(tf.zeros([this.widths[l]])));
        }
      }
    }
    if (this.memory) {
      for (let l = scales - 1; l >= 1; l--) {
        this.hopKernels.push(tf.variable(
          glorot([3, 3, this.widths[l], this.widths[l - 1]], seed + 10 * l + 5),
        ));
        this.hopBiases.push(tf.variable(tf.zeros([this.widths[l - 1]])));
      }
    }
  }

  get scales(): number {
    return this.cells.length;
  }

  variables(): tf.Variable[] {
    const out: tf.Variable[] = [];
    for (const cell of this.cells) out.push(...cell.variables());
    for (const block of this.blocks) out.push(...block.variables());
    out.push(...this.downKernels, ...this.downBiases);
    out.push(...this.liftKernels, ...this.liftBiases);
    out.push(...this.memKernels, ...this.memBiases);
    out.push(...this.hopKernels, ...this.hopBiases);
    return out;
  }

  /** Spatial size of each scale for a given input size (stride-2 chain). */
  scaleDims(height: number, width: number): Array<[number, number]> {
    const dims: Array<[number, number]> = [[height, width]];
    for (let l = 1; l < this.scales; l++) {
      const [h, w] = dims[l - 1];
      dims.push([Math.ceil(h / 2), Math.ceil(w / 2)]);
    }
    return dims;
  }

  zeroState(batch: number, height: number, width: number): EncoderState {
    const dims = this.scaleDims(height, width);
    return {
      cells: this.cells.map((cell, l) => cell.zeroState(batch, dims[l][0], dims[l][1])),
      memory: null,
    };
  }

  /**
   * One recurrent step over a [batch, h, w, inChannels] input.
   * `zeroMemory: true` zeroes the shared-memory path for this step without
   * touching the weights — the ablation switch.
   */
  step(x: tf.Tensor4D, state: EncoderState, zeroMemory = false): EncoderStep {
    return tidy(() => {
      const [batch, height, width] = x.shape;
      const dims = this.scaleDims(height, width);
      const flowing = this.memory && !zeroMemory;

      // Hand the top memory from t-1 down to the bottom scale, one
      // upsample+conv hop per scale gap.
      let memoryIn: tf.Tensor4D | null = null;
      if (flowing && state.memory !== null) {
        let m = state.memory;
        for (let hop = 0; hop < this.hopKernels.length; hop++) {
          const target = dims[this.scales - 2 - hop];
          m = tf.conv2d(
            tf.image.resizeNearestNeighbor(m, target),
            this.hopKernels[hop] as tf.Tensor4D, 1, "same",
          );
          m = tf.add(m, this.hopBiases[hop]) as tf.Tensor4D;
        }
        memoryIn = m;
      }

      const features: tf.Tensor4D[] = [];
      const steps: CellStep[] = [];
      const cellStates: CellState[] = [];
      for (let l = 0; l < this.scales; l++) {
        let feat = l === 0
          ? x
          : tf.add(
              tf.conv2d(features[l - 1], this.downKernels[l - 1] as tf.Tensor4D, 2, "same"),
              this.downBiases[l - 1],
            ) as tf.Tensor4D;
        if (this.blocks.length > 0) feat = this.blocks[l].forward(feat);

        let mIn: tf.Tensor4D | null = null;
        if (this.memory) {
          // zeroMemory keeps the shapes but severs the memory signal.
          mIn = flowing && memoryIn !== null
            ? memoryIn
            : tf.zeros([batch, dims[l][0], dims[l][1], this.widths[l]]);
          feat = tf.concat([feat, mIn], -1) as tf.Tensor4D;
        }

        const cellStep = this.cells[l].forward(feat, state.cells[l], this.densityFeedback);
        features.push(cellStep.state.h);
        steps.push(cellStep);
        cellStates.push(cellStep.state);

        if (flowing) {
          // Fresh memory for this scale, then lift it to the next one.
          const updated = tf.tanh(tf.add(
            tf.conv2d(
              tf.concat([cellStep.state.h, mIn as tf.Tensor4D], -1) as tf.Tensor4D,
              this.memKernels[l] as tf.Tensor4D, 1, "same",
            ),
            this.memBiases[l],
          )) as tf.Tensor4D;
          if (l + 1 < this.scales) {
            memoryIn = tf.add(
              tf.conv2d(updated, this.liftKernels[l] as tf.Tensor4D, 2, "same"),
              this.liftBiases[l],
            ) as tf.Tensor4D;
          } else {
            memoryIn = updated; // top-scale memory, carried to t+1
          }
        }
      }

      return {
        features,
        steps,
        state: {
          cells: cellStates,
          memory: flowing ? (memoryIn as tf.Tensor4D) : null,
        },
      };
    });
  }
}

/** Dispose every tensor inside an encoder state (loop hygiene). */
export function disposeState(state: EncoderState): void {
  for (const s of state.cells) {
    s.c.dispose();
    s.h.dispose();
  }
  state.memory?.dispose();
}
