import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { RgbImage, writePng } from "../src/images";
import { Rng } from "../src/rng";

export function tmpDir(label: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `adapters-${label}-`));
}

/** Synthetic scene: flat background, brighter rectangle "cars". */
export function makeScene(
  rng: Rng,
  side: number,
  dark: boolean
): { image: RgbImage; boxes: { x1: number; y1: number; x2: number; y2: number }[] } {
  const data = new Uint8Array(side * side * 3);
  const bg = dark ? 15 : 170;
  data.fill(bg);
  const boxes = [];
  const n = 1 + rng.int(2);
  for (let i = 0; i < n; i++) {
    const w = Math.max(4, 4 + rng.int(side / 3));
    const h = Math.max(4, 4 + rng.int(side / 3));
    const x1 = rng.int(side - w);
    const y1 = rng.int(side - h);
    const tone = dark ? 60 + rng.int(40) : 40 + rng.int(60);
    for (let y = y1; y < y1 + h; y++) {
      for (let x = x1; x < x1 + w; x++) {
        const o = 3 * (y * side + x);
        data[o] = tone;
        data[o + 1] = tone;
        data[o + 2] = tone + 20;
      }
    }
    boxes.push({ x1, y1, x2: x1 + w, y2: y1 + h });
  }
  return { image: { width: side, height: side, data }, boxes };
}

export function writePool(
  dir: string,
  n: number,
  side: number,
  dark: boolean,
  seed: number
): { id: string; boxes: { x1: number; y1: number; x2: number; y2: number }[] }[] {
  const rng = new Rng(seed);
  const records = [];
  for (let i = 0; i < n; i++) {
    const id = `${dark ? "night" : "day"}${String(i).padStart(3, "0")}`;
    const { image, boxes } = makeScene(rng, side, dark);
    writePng(path.join(dir, `${id}.png`), image);
    records.push({ id, boxes });
  }
  return records;
}

export function writeDataset(
  file: string,
  name: string,
  side: number,
  records: { id: string; boxes: { x1: number; y1: number; x2: number; y2: number }[] }[]
): void {
  const payload = {
    name,
    records: records.map((r) => ({
      id: r.id,
      width: side,
      height: side,
      attributes: { time_of_day: "daytime", weather: "clear", scene: "highway" },
      boxes: r.boxes.map((b) => ({ ...b, occluded: false, truncated: false, category: "car" })),
      image_path: `${r.id}.png`,
    })),
  };
  fs.writeFileSync(file, JSON.stringify(payload, null, 1));
}
