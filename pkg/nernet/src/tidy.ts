import * as tf from "@tensorflow/tfjs";

/**
 * tf.tidy with friendlier typing for structured return values.  tfjs only
 * accepts types carrying an index signature; the runtime walker handles
 * any nested plain object, so the cast is safe.
 */
export function tidy<T>(fn: () => T): T {
  return tf.tidy(fn as unknown as () => tf.TensorContainer) as unknown as T;
}
