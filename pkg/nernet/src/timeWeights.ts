/**
 * Learned per-event timestamp weighting.
 *
 * A small MLP maps a normalized timestamp u in [0, 1] to B softmax bin
 * weights; an event deposits polarity * weights into its pixel's bin
 * column, and one identity-initialized 3x3 convolution over the assembled
 * grid integrates neighborhoods.  Pretraining fits the model so its grid
 * matches trail-suppressed label grids; the timestamp->weights function
 * alone is exported as a WGT1 table for the Python voxelizer, which is why
 * the MLP sees only u (not polarity or position).
 *
 * The MLP's logits ride on a fixed prior: zero ("uniform", the blank-slate
 * default) or the log of the two-nearest-bins kernel ("bilinear", whose
 * softmax recovers that kernel exactly while the MLP is still zero).  A
 * sharpened-logit imitation cannot do this — softmax(s*[0.6, 0.4, 0...])
 * collapses toward one-hot for any s that empties the far bins — so the
 * classic kernel has to enter in log space.
 */

import * as tf from "@tensorflow/tfjs";
import { EventStream, writeWeights } from "./formats.js";

function glorot(shape: number[], seed: number): tf.Tensor {
  return tf.initializers.glorotUniform({ seed }).apply(shape) as tf.Tensor;
}

export interface LetcEvents {
  /** normalized timestamps in [0, 1] */
  u: Float32Array;
  /** polarity, +1 or -1 */
  p: Float32Array;
  /** flat pixel index, y * width + x */
  pix: Int32Array;
  width: number;
  height: number;
}

/** Normalize a window of an event stream for the weight model. */
export function eventsForWindow(stream: EventStream, t0: number, t1: number): LetcEvents {
  if (t1 <= t0) throw new Error(`window requires t0 < t1, got [${t0}, ${t1}]`);
  const keep: number[] = [];
  for (let i = 0; i < stream.t.length; i++) {
    if (stream.t[i] >= t0 && stream.t[i] <= t1) keep.push(i);
  }
  const u = new Float32Array(keep.length);
  const p = new Float32Array(keep.length);
  const pix = new Int32Array(keep.length);
  keep.forEach((idx, j) => {
    u[j] = (stream.t[idx] - t0) / (t1 - t0);
    p[j] = stream.p[idx];
    pix[j] = stream.y[idx] * stream.width + stream.x[idx];
  });
  return { u, p, pix, width: stream.width, height: stream.height };
}

/** Exact two-nearest-bins weight rows for timestamps u in [0, 1]. */
export function bilinearRows(u: ArrayLike<number>, bins: number): tf.Tensor2D {
  const rows = new Float32Array(u.length * bins);
  for (let i = 0; i < u.length; i++) {
    const pos = u[i] * (bins - 1);
    for (let k = 0; k < bins; k++) {
      rows[i * bins + k] = Math.max(0, 1 - Math.abs(pos - k));
    }
    if (bins === 1) rows[i] = 1;
  }
  return tf.tensor2d(rows, [u.length, bins]);
}

/** Deposit signed weight rows into a (bins, height, width) grid. */
export function assembleRows(
  rows: tf.Tensor2D, p: Float32Array, pix: Int32Array, height: number, width: number,
): tf.Tensor3D {
  return tf.tidy(() => {
    const cells = height * width;
    const signed = tf.mul(rows, tf.tensor2d(p, [p.length, 1]));
    const scatter = tf.oneHot(tf.tensor1d(pix, "int32"), cells); // [N, H*W]
    const flat = tf.matMul(signed as tf.Tensor2D, scatter, true, false); // [B, H*W]
    return tf.reshape(flat, [rows.shape[1], height, width]) as tf.Tensor3D;
  });
}

/** Fixed logit prior the learned residual rides on. */
export type WeightPrior = "uniform" | "bilinear";

export class TimestampWeightModel {
  readonly bins: number;
  readonly hidden: number;
  readonly prior: WeightPrior;
  readonly w1: tf.Variable;
  readonly b1: tf.Variable;
  readonly w2: tf.Variable;
  readonly b2: tf.Variable;
  readonly w3: tf.Variable;
  readonly b3: tf.Variable;
  /** 3x3 tail convolution over the assembled grid, identity at init */
  readonly tailKernel: tf.Variable;
  readonly tailBias: tf.Variable;

  constructor(bins: number, hidden = 32, seed = 0, prior: WeightPrior = "uniform") {
    if (bins < 1) throw new Error("bins must be >= 1");
    this.bins = bins;
    this.hidden = hidden;
    this.prior = prior;
    this.w1 = tf.variable(glorot([1, hidden], seed));
    this.b1 = tf.variable(tf.zeros([hidden]));
    this.w2 = tf.variable(glorot([hidden, hidden], seed + 1));
    this.b2 = tf.variable(tf.zeros([hidden]));
    // Zero last layer: an untrained model emits exactly its prior's rows.
    this.w3 = tf.variable(tf.zeros([hidden, bins]));
    this.b3 = tf.variable(tf.zeros([bins]));
    const delta = tf.buffer([3, 3, bins, bins]);
    for (let k = 0; k < bins; k++) delta.set(1, 1, 1, k, k);
    this.tailKernel = tf.variable(delta.toTensor());
    this.tailBias = tf.variable(tf.zeros([bins]));
  }

  variables(): tf.Variable[] {
    return [this.w1, this.b1, this.w2, this.b2, this.w3, this.b3,
            this.tailKernel, this.tailBias];
  }

  /**
   * Fixed logit prior for a column of timestamps, [N, B].  The bilinear
   * prior is log of the two-nearest-bins hats (floored at 1e-12 so empty
   * bins contribute ~e^-28, not -inf); softmax of it reproduces the hats
   * because each row already sums to 1.
   */
  private priorLogits(col: tf.Tensor2D): tf.Tensor2D {
    if (this.prior === "uniform") {
      return tf.zeros([col.shape[0], this.bins]);
    }
    const centers = tf.tensor2d([...Array(this.bins).keys()], [1, this.bins]);
    const pos = tf.mul(col, this.bins - 1);
    const hat = tf.relu(tf.sub(1, tf.abs(tf.sub(pos, centers))));
    return tf.log(tf.maximum(hat, 1e-12)) as tf.Tensor2D;
  }

  /** Softmax bin-weight rows for normalized timestamps, [N, B]. */
  rowsFor(u: ArrayLike<number> | tf.Tensor1D): tf.Tensor2D {
    return tf.tidy(() => {
      const col = u instanceof tf.Tensor
        ? tf.reshape(u, [-1, 1])
        : tf.tensor2d(Array.from(u as ArrayLike<number>), [u.length, 1]);
      const h1 = tf.relu(tf.add(tf.matMul(col as tf.Tensor2D, this.w1 as tf.Tensor2D), this.b1));
      const h2 = tf.relu(tf.add(tf.matMul(h1 as tf.Tensor2D, this.w2 as tf.Tensor2D), this.b2));
      const residual = tf.add(tf.matMul(h2 as tf.Tensor2D, this.w3 as tf.Tensor2D), this.b3);
      const logits = tf.add(residual, this.priorLogits(col as tf.Tensor2D));
      return tf.softmax(logits as tf.Tensor2D, -1) as tf.Tensor2D;
    });
  }

  /** Assembled (bins, height, width) grid for one event window. */
  assemble(events: LetcEvents): tf.Tensor3D {
    return tf.tidy(() => {
      const raw = assembleRows(
        this.rowsFor(events.u), events.p, events.pix, events.height, events.width,
      );
      const nhwc = tf.expandDims(tf.transpose(raw, [1, 2, 0]), 0); // [1, H, W, B]
      const mixed = tf.add(
        tf.conv2d(nhwc as tf.Tensor4D, this.tailKernel as tf.Tensor4D, 1, "same"),
        this.tailBias,
      );
      return tf.transpose(tf.squeeze(mixed, [0]), [2, 0, 1]) as tf.Tensor3D;
    });
  }

  /** Sample the weight function on a uniform grid and write a WGT1 table. */
  exportTable(path: string, resolution = 256): void {
    const u = new Float64Array(resolution);
    for (let r = 0; r < resolution; r++) u[r] = r / (resolution - 1);
    const rows = this.rowsFor(u);
    const data = rows.dataSync() as Float32Array;
    rows.dispose();
    const out: Float32Array[] = [];
    for (let r = 0; r < resolution; r++) {
      out.push(data.slice(r * this.bins, (r + 1) * this.bins));
    }
    writeWeights(path, out, this.bins);
  }
}

export interface LetcPair {
  events: LetcEvents;
  /** label grid, [bins, height, width] */
  label: tf.Tensor3D;
}

/** Mean squared error between the model's grid and the label grid. */
export function letcLoss(model: TimestampWeightModel, pair: LetcPair): tf.Scalar {
  return tf.tidy(() => {
    const grid = model.assemble(pair.events);
    return tf.mean(tf.square(tf.sub(grid, pair.label))) as tf.Scalar;
  });
}

/**
 * Fit the model to trail-suppressed label grids.  One Adam step per pair
 * per epoch; returns the per-epoch mean loss curve (epoch 0 = before any
 * update).
 */
export function pretrain(
  model: TimestampWeightModel,
  pairs: LetcPair[],
  opts: { epochs?: number; learningRate?: number } = {},
): number[] {
  if (pairs.length === 0) throw new Error("pretrain needs at least one pair");
  for (const pair of pairs) {
    const [b, h, w] = pair.label.shape;
    if (b !== model.bins) {
      throw new Error(`label has ${b} bins, model expects ${model.bins}`);
    }
    if (h !== pair.events.height || w !== pair.events.width) {
      throw new Error(
        `label grid ${h}x${w} does not match stream geometry ${pair.events.height}x${pair.events.width}`,
      );
    }
    for (const q of pair.events.pix) {
      if (q < 0 || q >= h * w) throw new Error(`pixel index ${q} outside ${h}x${w}`);
    }
  }
  const epochs = opts.epochs ?? 50;
  const optimizer = tf.train.adam(opts.learningRate ?? 1e-2);
  const meanLoss = () => {
    let total = 0;
    for (const pair of pairs) {
      const value = letcLoss(model, pair);
      total += value.dataSync()[0];
      value.dispose();
    }
    return total / pairs.length;
  };
  const curve: number[] = [meanLoss()];
  for (let epoch = 0; epoch < epochs; epoch++) {
    for (const pair of pairs) {
      optimizer.minimize(() => letcLoss(model, pair), false, model.variables());
    }
    curve.push(meanLoss());
  }
  optimizer.dispose();
  return curve;
}
