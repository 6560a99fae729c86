/**
 * U-shaped reconstruction network: the dual-memory encoder feeds a decoder
 * that upsamples back to full resolution with skip connections from every
 * scale, ending in a sigmoid head — one grayscale frame in [0, 1] per
 * voxel window, recurrent over the window sequence.
 *
 * The training loss is 0.8*L1 + 0.2*(1 - SSIM) per frame, plus a temporal
 * term from step L0 on: mean |I_t - I_{t-1}| masked to low-event-density
 * pixels, weighted by lambdaTc.  The mask confines the smoothness penalty
 * to static regions so moving content is free to change between frames.
 */

import * as tf from "@tensorflow/tfjs";
import { DualMemoryEncoder, EncoderOptions, EncoderState } from "./encoder.js";
import { tidy } from "./tidy.js";

function glorot(shape: number[], seed: number): tf.Tensor {
  return tf.initializers.glorotUniform({ seed }).apply(shape) as tf.Tensor;
}

export class ReconNet {
  readonly encoder: DualMemoryEncoder;
  readonly upKernels: tf.Variable[];
  readonly upBiases: tf.Variable[];
  readonly fuseKernels: tf.Variable[];
  readonly fuseBiases: tf.Variable[];
  readonly headKernel: tf.Variable;
  readonly headBias: tf.Variable;

  constructor(inChannels: number, options: EncoderOptions = {}) {
    this.encoder = new DualMemoryEncoder(inChannels, options);
    const widths = this.encoder.widths;
    const seed = (options.seed ?? 0) + 1000;
    this.upKernels = [];
    this.upBiases = [];
    this.fuseKernels = [];
    this.fuseBiases = [];
    for (let l = widths.length - 1; l >= 1; l--) {
      this.upKernels.push(tf.variable(glorot([3, 3, widths[l], widths[l - 1]], seed + 2 * l)));
      this.upBiases.push(tf.variable(tf.zeros([widths[l - 1]])));
      this.fuseKernels.push(
        tf.variable(glorot([3, 3, 2 * widths[l - 1], widths[l - 1]], seed + 2 * l + 1)),
      );
      this.fuseBiases.push(tf.variable(tf.zeros([widths[l - 1]])));
    }
    this.headKernel = tf.variable(glorot([1, 1, widths[0], 1], seed + 99));
    this.headBias = tf.variable(tf.zeros([1]));
  }

  variables(): tf.Variable[] {
    return [
      ...this.encoder.variables(),
      ...this.upKernels, ...this.upBiases,
      ...this.fuseKernels, ...this.fuseBiases,
      this.headKernel, this.headBias,
    ];
  }

  zeroState(batch: number, height: number, width: number): EncoderState {
    return this.encoder.zeroState(batch, height, width);
  }

  forward(x: tf.Tensor4D, state: EncoderState): { image: tf.Tensor4D; state: EncoderState } {
    return tidy(() => {
      const [, height, width] = x.shape;
      const dims = this.encoder.scaleDims(height, width);
      const enc = this.encoder.step(x, state);
      let d = enc.features[this.encoder.scales - 1];
      for (let i = 0; i < this.upKernels.length; i++) {
        const l = this.encoder.scales - 1 - i; // decoding from scale l to l-1
        d = tf.relu(tf.add(
          tf.conv2d(
            tf.image.resizeNearestNeighbor(d, dims[l - 1]),
            this.upKernels[i] as tf.Tensor4D, 1, "same",
          ),
          this.upBiases[i],
        )) as tf.Tensor4D;
        d = tf.relu(tf.add(
          tf.conv2d(
            tf.concat([d, enc.features[l - 1]], -1) as tf.Tensor4D,
            this.fuseKernels[i] as tf.Tensor4D, 1, "same",
          ),
          this.fuseBiases[i],
        )) as tf.Tensor4D;
      }
      const image = tf.sigmoid(tf.add(
        tf.conv2d(d as tf.Tensor4D, this.headKernel as tf.Tensor4D, 1, "same"),
        this.headBias,
      )) as tf.Tensor4D;
      return { image, state: enc.state };
    });
  }
}

/**
 * Mean SSIM over non-overlapping `window` x `window` tiles (population
 * variance, C1 = 0.01^2, C2 = 0.03^2), differentiable.  Partial tiles at
 * the edges are dropped.
 */
export function ssimPooled(a: tf.Tensor4D, b: tf.Tensor4D, window = 8): tf.Scalar {
  return tf.tidy(() => {
    const C1 = 0.01 ** 2;
    const C2 = 0.03 ** 2;
    const pool = (t: tf.Tensor4D) => tf.avgPool(t, window, window, "valid");
    const muA = pool(a);
    const muB = pool(b);
    const varA = tf.sub(pool(tf.square(a)), tf.square(muA));
    const varB = tf.sub(pool(tf.square(b)), tf.square(muB));
    const cov = tf.sub(pool(tf.mul(a, b)), tf.mul(muA, muB));
    const num = tf.mul(
      tf.add(tf.mul(tf.mul(muA, muB), 2), C1),
      tf.add(tf.mul(cov, 2), C2),
    );
    const den = tf.mul(
      tf.add(tf.add(tf.square(muA), tf.square(muB)), C1),
      tf.add(tf.add(varA, varB), C2),
    );
    return tf.mean(tf.div(num, den)) as tf.Scalar;
  });
}

/**
 * Pixels whose event density is below `threshold` (after normalizing the
 * per-pixel absolute voxel mass to [0, 1]), as a {0,1} float mask.
 */
export function lowDensityMask(voxel: tf.Tensor4D, threshold = 0.1): tf.Tensor4D {
  return tf.tidy(() => {
    const density = tf.sum(tf.abs(voxel), -1, true);
    const peak = tf.max(density);
    const normed = tf.div(density, tf.add(peak, 1e-12));
    return tf.cast(tf.less(normed, threshold), "float32") as tf.Tensor4D;
  });
}

export interface Sequence {
  /** voxel windows, each [1, H, W, B] */
  voxels: tf.Tensor4D[];
  /** ground-truth frames, each [1, H, W, 1] */
  frames: tf.Tensor4D[];
}

export interface TrainOptions {
  epochs?: number;
  /** unroll length L */
  unroll?: number;
  /** first step that pays the temporal penalty, L0 */
  tcStart?: number;
  lambdaTc?: number;
  learningRate?: number;
  densityThreshold?: number;
  ssimWindow?: number;
}

/** Per-sequence loss over one unrolled pass; fresh zero state. */
export function sequenceLoss(net: ReconNet, seq: Sequence, opts: TrainOptions = {}): tf.Scalar {
  const unroll = opts.unroll ?? 40;
  const tcStart = opts.tcStart ?? 2;
  const lambdaTc = opts.lambdaTc ?? 2;
  const window = opts.ssimWindow ?? 8;
  const threshold = opts.densityThreshold ?? 0.1;
  if (seq.voxels.length !== seq.frames.length) {
    throw new Error(`sequence has ${seq.voxels.length} windows but ${seq.frames.length} frames`);
  }
  if (seq.voxels.length < tcStart + 1) {
    throw new Error(
      `sequence of ${seq.voxels.length} windows is too short: the temporal term starts at step ${tcStart}`,
    );
  }
  return tf.tidy(() => {
    const steps = Math.min(unroll, seq.voxels.length);
    const [, height, width] = seq.voxels[0].shape;
    let state = net.zeroState(1, height, width);
    let loss = tf.scalar(0);
    let previous: tf.Tensor4D | null = null;
    for (let i = 0; i < steps; i++) {
      const out = net.forward(seq.voxels[i], state);
      state = out.state;
      const rec = tf.add(
        tf.mul(tf.mean(tf.abs(tf.sub(out.image, seq.frames[i]))), 0.8),
        tf.mul(tf.sub(1, ssimPooled(out.image, seq.frames[i], window)), 0.2),
      );
      loss = tf.add(loss, rec) as tf.Scalar;
      if (previous !== null && i >= tcStart) {
        const mask = lowDensityMask(seq.voxels[i], threshold);
        const tc = tf.mean(tf.mul(mask, tf.abs(tf.sub(out.image, previous))));
        loss = tf.add(loss, tf.mul(tc, lambdaTc)) as tf.Scalar;
      }
      previous = out.image;
    }
    return loss as tf.Scalar;
  });
}

/** Adam over the summed sequence losses; returns the per-epoch loss curve. */
export function trainRecon(net: ReconNet, data: Sequence[], opts: TrainOptions = {}): number[] {
  const epochs = opts.epochs ?? 20;
  const optimizer = tf.train.adam(opts.learningRate ?? 1e-4);
  const losses: number[] = [];
  for (let epoch = 0; epoch < epochs; epoch++) {
    let total = 0;
    for (const seq of data) {
      const value = optimizer.minimize(
        () => sequenceLoss(net, seq, opts),
        true,
        net.variables(),
      ) as tf.Scalar;
      total += value.dataSync()[0];
      value.dispose();
    }
    losses.push(total / data.length);
  }
  optimizer.dispose();
  return losses;
}
