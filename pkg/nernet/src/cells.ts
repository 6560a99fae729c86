/**
 * Recurrent convolutional cell with a density-damped forget gate.
 *
 * The cell is a standard conv-LSTM except that the forget gate subtracts
 * a learned, input-driven term before its sigmoid:
 *
 *     alpha = exp(sigmoid(conv(x)))          // in (1, e) elementwise
 *     f     = sigmoid(fPre - alpha * i)      // in (0, 1) elementwise
 *
 * Dense event activity (large alpha * i) pushes the forget gate down, so
 * the cell sheds state faster exactly where the input is busy — negative
 * feedback that keeps the temporal state from drifting under sustained
 * bursts.  With the feedback disabled the cell reduces to a plain
 * conv-LSTM, which the tests rely on.
 */

import * as tf from "@tensorflow/tfjs";

export interface CellState {
  /** cell state, [batch, h, w, channels] */
  c: tf.Tensor4D;
  /** hidden state, [batch, h, w, channels] */
  h: tf.Tensor4D;
}

export interface CellStep {
  state: CellState;
  /** density feedback strength, in (1, e) */
  alpha: tf.Tensor4D;
  /** forget gate after feedback, in (0, 1) */
  forget: tf.Tensor4D;
  /** input gate, in (0, 1) */
  input: tf.Tensor4D;
}

function glorot(shape: number[], seed: number): tf.Tensor {
  return tf.initializers.glorotUniform({ seed }).apply(shape) as tf.Tensor;
}

export class DensityGatedCell {
  readonly inChannels: number;
  readonly channels: number;
  readonly gateKernel: tf.Variable;
  readonly gateBias: tf.Variable;
  readonly densityKernel: tf.Variable;
  readonly densityBias: tf.Variable;

  constructor(inChannels: number, channels: number, seed = 0) {
    this.inChannels = inChannels;
    this.channels = channels;
    this.gateKernel = tf.variable(
      glorot([3, 3, inChannels + channels, 4 * channels], seed),
    );
    this.gateBias = tf.variable(tf.zeros([4 * channels]));
    this.densityKernel = tf.variable(glorot([3, 3, inChannels, channels], seed + 1));
    this.densityBias = tf.variable(tf.zeros([channels]));
  }

  variables(): tf.Variable[] {
    return [this.gateKernel, this.gateBias, this.densityKernel, this.densityBias];
  }

  zeroState(batch: number, height: number, width: number): CellState {
    const shape: [number, number, number, number] = [batch, height, width, this.channels];
    return { c: tf.zeros(shape), h: tf.zeros(shape) };
  }

  /**
   * One recurrent step.  `densityFeedback: false` turns the cell into a
   * plain conv-LSTM (alpha is still reported for inspection).
   */
  forward(x: tf.Tensor4D, state: CellState, densityFeedback = true): CellStep {
    return tf.tidy(() => {
      const zx = tf.concat([x, state.h], -1);
      const gates = tf.add(
        tf.conv2d(zx as tf.Tensor4D, this.gateKernel as tf.Tensor4D, 1, "same"),
        this.gateBias,
      );
      const [iPre, fPre, oPre, gPre] = tf.split(gates, 4, -1);
      const input = tf.sigmoid(iPre) as tf.Tensor4D;
      const dPre = tf.add(
        tf.conv2d(x, this.densityKernel as tf.Tensor4D, 1, "same"),
        this.densityBias,
      );
      const alpha = tf.exp(tf.sigmoid(dPre)) as tf.Tensor4D;
      const forget = (densityFeedback
        ? tf.sigmoid(tf.sub(fPre, tf.mul(alpha, input)))
        : tf.sigmoid(fPre)) as tf.Tensor4D;
      const c = tf.add(
        tf.mul(forget, state.c),
        tf.mul(input, tf.tanh(gPre)),
      ) as tf.Tensor4D;
      const h = tf.mul(tf.sigmoid(oPre), tf.tanh(c)) as tf.Tensor4D;
      return { state: { c, h }, alpha, forget, input };
    });
  }
}
