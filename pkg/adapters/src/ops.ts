/** Building-block ops tuned for the pure-JS cpu backend.
 *
 * The stock Conv2DBackpropFilter kernel is a naive loop that dominates
 * training time, so convolution here is a customGrad op whose backward passes
 * are themselves expressed as forward convolutions (the backend runs those
 * through its fast im2col + matmul path):
 *   dX = conv(dY, rot180(W) with channels swapped)
 *   dW = conv(X-padded with channels as batch, dY with batch as channels)
 * Only stride-1 convs with odd kernels are supported; downsampling goes
 * through pool2 and upsampling through up2.
 */
import * as tf from "@tensorflow/tfjs";

function fastFilterGrad(x: tf.Tensor4D, dy: tf.Tensor4D, k: number): tf.Tensor4D {
  return tf.tidy(() => {
    const p = (k - 1) / 2;
    const xp = p ? tf.pad(x, [[0, 0], [p, p], [p, p], [0, 0]]) : x;
    const lhs = tf.transpose(xp, [3, 1, 2, 0]); // [Ci, Hp, Wp, B]
    const rhs = tf.transpose(dy, [1, 2, 0, 3]); // [H, W, B, Co]
    const out = tf.conv2d(lhs as tf.Tensor4D, rhs as tf.Tensor4D, 1, "valid"); // [Ci, k, k, Co]
    return tf.transpose(out, [1, 2, 0, 3]) as tf.Tensor4D;
  });
}

const convSameOp = tf.customGrad((...args: unknown[]) => {
  const [x, w, save] = args as [tf.Tensor4D, tf.Tensor4D, tf.GradSaveFunc];
  if (w.shape[0] % 2 !== 1 || w.shape[0] !== w.shape[1]) {
    throw new Error(`convSame expects square odd kernels, got ${w.shape}`);
  }
  save([x, w]);
  return {
    value: tf.conv2d(x, w, 1, "same"),
    gradFunc: (dy: tf.Tensor4D, saved: tf.Tensor[]) => {
      const [xs, ws] = saved as [tf.Tensor4D, tf.Tensor4D];
      const dx = tf.tidy(() =>
        tf.conv2d(dy, tf.transpose(tf.reverse(ws, [0, 1]), [0, 1, 3, 2]) as tf.Tensor4D, 1, "same")
      );
      return [dx, fastFilterGrad(xs, dy, ws.shape[0])];
    },
  };
});

/** Stride-1 same-padding convolution with bias. */
export function convSame(x: tf.Tensor4D, w: tf.Tensor, b: tf.Tensor): tf.Tensor4D {
  return tf.add(convSameOp(x, w as tf.Tensor4D), b) as tf.Tensor4D;
}

/** 2x2 average pooling via reshape+mean (cheap, well-supported gradient). */
export function pool2(x: tf.Tensor4D): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  return tf.tidy(() =>
    tf.mean(tf.reshape(x, [b, h / 2, 2, w / 2, 2, c]), [2, 4])
  ) as tf.Tensor4D;
}

/** 2x nearest-neighbor upsampling. */
export function up2(x: tf.Tensor4D): tf.Tensor4D {
  return tf.image.resizeNearestNeighbor(x, [x.shape[1] * 2, x.shape[2] * 2]);
}

export function leakyRelu(x: tf.Tensor, alpha = 0.2): tf.Tensor {
  return tf.leakyRelu(x, alpha);
}
