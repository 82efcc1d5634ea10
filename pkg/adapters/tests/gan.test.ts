import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";
import { translatorTrainConfigSchema } from "../src/config";
import { Generator, StepLosses, buildCycleGan, trainCycleGan, translateImage } from "../src/gan";
import { readImage, writePng } from "../src/images";
import { tmpDir, writePool } from "./helpers";

beforeAll(async () => {
  await tf.setBackend("cpu");
});

const SMOKE = {
  epochs: 1,
  image_side: 16,
  base_filters: 4,
  seed: 11,
};

function smokeTrain(dayDir: string, nightDir: string, seed: number): StepLosses[] {
  const config = translatorTrainConfigSchema.parse({ ...SMOKE, seed });
  const logs: StepLosses[] = [];
  trainCycleGan(dayDir, nightDir, config, (_, losses) => logs.push(losses));
  return logs;
}

describe("cyclegan training", () => {
  it("smoke run produces finite losses", () => {
    const dir = tmpDir("gan");
    writePool(path.join(dir, "day"), 3, 16, false, 1);
    writePool(path.join(dir, "night"), 3, 16, true, 2);
    fs.mkdirSync(path.join(dir, "day"), { recursive: true });
    const logs = smokeTrain(path.join(dir, "day"), path.join(dir, "night"), 11);
    expect(logs.length).toBe(3);
    for (const losses of logs) {
      for (const value of Object.values(losses)) {
        expect(Number.isFinite(value)).toBe(true);
      }
    }
  });

  it("equal seeds produce identical loss logs", () => {
    const dir = tmpDir("gan-seed");
    writePool(path.join(dir, "day"), 3, 16, false, 3);
    writePool(path.join(dir, "night"), 3, 16, true, 4);
    const a = smokeTrain(path.join(dir, "day"), path.join(dir, "night"), 21);
    const b = smokeTrain(path.join(dir, "day"), path.join(dir, "night"), 21);
    const c = smokeTrain(path.join(dir, "day"), path.join(dir, "night"), 22);
    expect(JSON.stringify(a)).toBe(JSON.stringify(b));
    expect(JSON.stringify(a)).not.toBe(JSON.stringify(c));
  });

  it("rejects empty image directories", () => {
    const dir = tmpDir("gan-empty");
    fs.mkdirSync(path.join(dir, "day"));
    fs.mkdirSync(path.join(dir, "night"));
    const config = translatorTrainConfigSchema.parse(SMOKE);
    expect(() => trainCycleGan(path.join(dir, "day"), path.join(dir, "night"),
                               config, () => {})).toThrow(/images/);
  });
});

describe("translateImage", () => {
  it("preserves dimensions, including odd ones", () => {
    const generator = new Generator(4, false, 7);
    for (const [w, h] of [[16, 16], [17, 23], [20, 15]]) {
      const data = new Uint8Array(w * h * 3).fill(128);
      const out = translateImage(generator, { width: w, height: h, data });
      expect(out.shape).toEqual([h, w, 3]);
      out.dispose();
    }
  });

  it("checkpoint round-trip reproduces outputs exactly", () => {
    const dir = tmpDir("gan-ckpt");
    const config = translatorTrainConfigSchema.parse(SMOKE);
    const models = buildCycleGan(config);
    models.dayToNight.store.save(dir, "g_night");

    const reloaded = new Generator(config.base_filters, config.skip_connections,
                                   config.seed * 1000 + 100);
    // Perturb, then load: values must come from the checkpoint.
    reloaded.store.loadFrom(dir, "g_night");
    const image = { width: 16, height: 16, data: new Uint8Array(16 * 16 * 3).fill(90) };
    const a = translateImage(models.dayToNight, image);
    const b = translateImage(reloaded, image);
    expect(tf.max(tf.abs(tf.sub(a, b))).dataSync()[0]).toBe(0);
  });

  it("skip connections change the architecture but keep shapes", () => {
    const generator = new Generator(4, true, 9);
    const image = { width: 16, height: 16, data: new Uint8Array(16 * 16 * 3).fill(10) };
    const out = translateImage(generator, image);
    expect(out.shape).toEqual([16, 16, 3]);
  });
});

describe("png io", () => {
  it("round-trips rgb payloads byte for byte", () => {
    const dir = tmpDir("png");
    const data = new Uint8Array(8 * 8 * 3);
    for (let i = 0; i < data.length; i++) data[i] = (i * 7) % 256;
    const file = path.join(dir, "x.png");
    writePng(file, { width: 8, height: 8, data });
    const back = readImage(file);
    expect(Buffer.from(back.data).equals(Buffer.from(data))).toBe(true);
  });
});
