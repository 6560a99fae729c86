/**
 * Global-context residual block: softmax attention pooling over all
 * positions, a bottleneck transform, and a residual add.
 *
 *     gamma   = softmax(conv1x1(x) over positions)      // sums to 1
 *     context = sum_j gamma_j * x_j                     // [batch, C]
 *     out     = x + conv1x1(relu(layerNorm(conv1x1(context))))
 *
 * The final projection starts at zero, so a freshly constructed block is
 * exactly the identity — residual training starts from a safe point.
 */

import * as tf from "@tensorflow/tfjs";

function glorot(shape: number[], seed: number): tf.Tensor {
  return tf.initializers.glorotUniform({ seed }).apply(shape) as tf.Tensor;
}

export class GlobalContextBlock {
  readonly channels: number;
  readonly bottleneck: number;
  readonly attnKernel: tf.Variable;
  readonly attnBias: tf.Variable;
  readonly reduceKernel: tf.Variable;
  readonly reduceBias: tf.Variable;
  readonly lnGain: tf.Variable;
  readonly lnShift: tf.Variable;
  readonly expandKernel: tf.Variable; // zero-initialized: block starts as identity
  readonly expandBias: tf.Variable;

  constructor(channels: number, seed = 0) {
    this.channels = channels;
    this.bottleneck = Math.max(1, Math.floor(channels / 2));
    this.attnKernel = tf.variable(glorot([channels, 1], seed));
    this.attnBias = tf.variable(tf.zeros([1]));
    this.reduceKernel = tf.variable(glorot([channels, this.bottleneck], seed + 1));
    this.reduceBias = tf.variable(tf.zeros([this.bottleneck]));
    this.lnGain = tf.variable(tf.ones([this.bottleneck]));
    this.lnShift = tf.variable(tf.zeros([this.bottleneck]));
    this.expandKernel = tf.variable(tf.zeros([this.bottleneck, channels]));
    this.expandBias = tf.variable(tf.zeros([channels]));
  }

  variables(): tf.Variable[] {
    return [
      this.attnKernel, this.attnBias, this.reduceKernel, this.reduceBias,
      this.lnGain, this.lnShift, this.expandKernel, this.expandBias,
    ];
  }

  /** Attention weights over positions, [batch, h*w]; each row sums to 1. */
  attention(x: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      const [b, h, w, c] = x.shape;
      const flat = tf.reshape(x, [b, h * w, c]);
      const logits = tf.add(
        tf.matMul(flat, tf.tile(tf.expandDims(this.attnKernel as tf.Tensor2D, 0), [b, 1, 1])),
        this.attnBias,
      );
      return tf.softmax(tf.reshape(logits, [b, h * w]), -1) as tf.Tensor2D;
    });
  }

  /** Attention-pooled feature vector, [batch, C] — a convex combination
   *  of the positions, so a constant input pools to that constant. */
  context(x: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      const [b, h, w, c] = x.shape;
      const flat = tf.reshape(x, [b, h * w, c]);
      const gamma = this.attention(x); // [b, N]
      return tf.sum(tf.mul(flat, tf.expandDims(gamma, -1)), 1) as tf.Tensor2D;
    });
  }

  forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      const [b, , , c] = x.shape;
      const context = this.context(x);

      const reduced = tf.add(
        tf.matMul(context, this.reduceKernel as tf.Tensor2D),
        this.reduceBias,
      );
      const mean = tf.mean(reduced, -1, true);
      const variance = tf.mean(tf.square(tf.sub(reduced, mean)), -1, true);
      const normed = tf.div(tf.sub(reduced, mean), tf.sqrt(tf.add(variance, 1e-5)));
      const activated = tf.relu(tf.add(tf.mul(normed, this.lnGain), this.lnShift));
      const update = tf.add(
        tf.matMul(activated, this.expandKernel as tf.Tensor2D),
        this.expandBias,
      ); // [b, C], exactly zero at init
      return tf.add(x, tf.reshape(update, [b, 1, 1, c])) as tf.Tensor4D;
    });
  }
}
