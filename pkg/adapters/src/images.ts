/** 8-bit RGB image I/O: PNG (read/write) and JPEG (read). */
import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";
import * as jpeg from "jpeg-js";

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB, 3 bytes per pixel. */
  data: Uint8Array;
}

export function readImage(file: string): RgbImage {
  const buffer = fs.readFileSync(file);
  const ext = path.extname(file).toLowerCase();
  if (ext === ".png") {
    const png = PNG.sync.read(buffer);
    return { width: png.width, height: png.height, data: dropAlpha(png.data, png.width * png.height) };
  }
  if (ext === ".jpg" || ext === ".jpeg") {
    const decoded = jpeg.decode(buffer, { useTArray: true, formatAsRGBA: true });
    return { width: decoded.width, height: decoded.height, data: dropAlpha(decoded.data, decoded.width * decoded.height) };
  }
  throw new Error(`unsupported image format: ${file}`);
}

export function writePng(file: string, image: RgbImage): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    png.data[4 * i] = image.data[3 * i];
    png.data[4 * i + 1] = image.data[3 * i + 1];
    png.data[4 * i + 2] = image.data[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  fs.mkdirSync(path.dirname(file), { recursive: true });
  fs.writeFileSync(file, PNG.sync.write(png));
}

function dropAlpha(rgba: Uint8Array | Buffer, pixels: number): Uint8Array {
  const rgb = new Uint8Array(pixels * 3);
  for (let i = 0; i < pixels; i++) {
    rgb[3 * i] = rgba[4 * i];
    rgb[3 * i + 1] = rgba[4 * i + 1];
    rgb[3 * i + 2] = rgba[4 * i + 2];
  }
  return rgb;
}

/** [H, W, 3] float tensor scaled to [-1, 1]. */
export function toTensor(image: RgbImage): tf.Tensor3D {
  const floats = new Float32Array(image.data.length);
  for (let i = 0; i < image.data.length; i++) {
    floats[i] = image.data[i] / 127.5 - 1.0;
  }
  return tf.tensor3d(floats, [image.height, image.width, 3]);
}

/** Inverse of toTensor, with clamping and round-half-up. */
export function fromTensor(t: tf.Tensor3D): RgbImage {
  const [height, width] = t.shape;
  const values = t.dataSync();
  const data = new Uint8Array(values.length);
  for (let i = 0; i < values.length; i++) {
    const v = Math.floor((values[i] + 1.0) * 127.5 + 0.5);
    data[i] = Math.min(255, Math.max(0, v));
  }
  return { width, height, data };
}

export function meanLuma(image: RgbImage): number {
  let total = 0;
  const pixels = image.width * image.height;
  for (let i = 0; i < pixels; i++) {
    total += 0.299 * image.data[3 * i] + 0.587 * image.data[3 * i + 1] + 0.114 * image.data[3 * i + 2];
  }
  return total / pixels;
}

export function listImages(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => /\.(png|jpe?g)$/i.test(f))
    .sort()
    .map((f) => path.join(dir, f));
}
