import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";
import { convSame, pool2, up2 } from "../src/ops";

beforeAll(async () => {
  await tf.setBackend("cpu");
});

describe("convSame", () => {
  it("matches the builtin forward conv", () => {
    const x = tf.randomNormal([1, 8, 8, 3], 0, 1, "float32", 1) as tf.Tensor4D;
    const w = tf.randomNormal([3, 3, 3, 5], 0, 1, "float32", 2) as tf.Tensor4D;
    const b = tf.zeros([5]);
    const mine = convSame(x, w, b);
    const ref = tf.conv2d(x, w, 1, "same");
    const diff = tf.max(tf.abs(tf.sub(mine, ref))).dataSync()[0];
    expect(diff).toBeLessThan(1e-5);
  });

  it("gradients match finite differences", () => {
    const x = tf.randomNormal([1, 6, 6, 2], 0, 1, "float32", 3) as tf.Tensor4D;
    const w = tf.variable(tf.randomNormal([3, 3, 2, 2], 0, 0.5, "float32", 4));
    const b = tf.variable(tf.zeros([2]));
    const loss = () => tf.tidy(() => tf.mean(tf.square(convSame(x, w, b))) as tf.Scalar);

    const { grads } = tf.variableGrads(loss, [w]);
    const analytic = grads[Object.keys(grads)[0]].dataSync();

    const eps = 1e-2;
    const data = Array.from(w.dataSync());
    for (const idx of [0, 7, 20, 35]) {
      const orig = data[idx];
      data[idx] = orig + eps;
      w.assign(tf.tensor(data, w.shape as [number, number, number, number]));
      const plus = loss().dataSync()[0];
      data[idx] = orig - eps;
      w.assign(tf.tensor(data, w.shape as [number, number, number, number]));
      const minus = loss().dataSync()[0];
      data[idx] = orig;
      w.assign(tf.tensor(data, w.shape as [number, number, number, number]));
      const numeric = (plus - minus) / (2 * eps);
      expect(analytic[idx]).toBeCloseTo(numeric, 3);
    }
  });

  it("supports 1x1 kernels", () => {
    const x = tf.randomNormal([1, 4, 4, 3], 0, 1, "float32", 5) as tf.Tensor4D;
    const w = tf.randomNormal([1, 1, 3, 2], 0, 1, "float32", 6) as tf.Tensor4D;
    const out = convSame(x, w, tf.zeros([2]));
    expect(out.shape).toEqual([1, 4, 4, 2]);
  });

  it("rejects even kernels", () => {
    const x = tf.zeros([1, 4, 4, 3]) as tf.Tensor4D;
    const w = tf.zeros([2, 2, 3, 2]) as tf.Tensor4D;
    expect(() => convSame(x, w, tf.zeros([2]))).toThrow(/odd/);
  });
});

describe("pool2 / up2", () => {
  it("pool2 equals 2x2 average pooling", () => {
    const x = tf.randomNormal([1, 8, 8, 3], 0, 1, "float32", 7) as tf.Tensor4D;
    const mine = pool2(x);
    const ref = tf.avgPool(x, 2, 2, "valid");
    const diff = tf.max(tf.abs(tf.sub(mine, ref))).dataSync()[0];
    expect(diff).toBeLessThan(1e-6);
  });

  it("up2 doubles spatial dims and pool2 inverts it", () => {
    const x = tf.randomNormal([1, 4, 4, 2], 0, 1, "float32", 8) as tf.Tensor4D;
    const up = up2(x);
    expect(up.shape).toEqual([1, 8, 8, 2]);
    const back = pool2(up);
    const diff = tf.max(tf.abs(tf.sub(back, x))).dataSync()[0];
    expect(diff).toBeLessThan(1e-6);
  });
});
