/** Detector adapter CLI, honoring the pipeline's external detector contract:
 *
 *   detector.js train --dataset <json> --images <dir> --seed <n> --model-out <dir> [--config <json>]
 *   detector.js infer --model <dir> --dataset <json> --images <dir> --detections-out <file>
 *
 * Detections are written in the pipeline's format: a JSON array of
 * {image_id, x1, y1, x2, y2, confidence} with confidence in [0, 1].
 */
import * as fs from "fs";
import * as path from "path";
import { parseArgs } from "util";
import * as tf from "@tensorflow/tfjs";
import { DetectorTrainConfig, detectionSchema, loadDataset, loadDetectorConfig } from "./config";
import { DetectorNet, EmptyDatasetError, detectImage, trainDetector } from "./frcnn";
import { readImage } from "./images";

const CHECKPOINT = "checkpoint.json";

async function cmdTrain(values: Record<string, string | undefined>): Promise<number> {
  const datasetPath = required(values, "dataset");
  const imagesDir = required(values, "images");
  const seed = parseInt(required(values, "seed"), 10);
  const modelOut = required(values, "model-out");
  const config = loadDetectorConfig(values.config);
  const dataset = loadDataset(datasetPath);

  let net: DetectorNet;
  try {
    net = trainDetector(dataset, imagesDir, config, seed, (log) => {
      console.log(
        `iter=${log.iter} lr=${log.lr.toFixed(6)} rpn_cls=${log.rpnCls.toFixed(6)} ` +
          `rpn_reg=${log.rpnReg.toFixed(6)} roi_cls=${log.roiCls.toFixed(6)} ` +
          `roi_reg=${log.roiReg.toFixed(6)}`
      );
    });
  } catch (err) {
    if (err instanceof EmptyDatasetError) {
      console.error(`cannot train: ${err.message}`);
      return 2;
    }
    throw err;
  }

  fs.mkdirSync(modelOut, { recursive: true });
  net.store.save(modelOut, "detector");
  fs.writeFileSync(
    path.join(modelOut, CHECKPOINT),
    JSON.stringify({ kind: "two_stage_rpn", seed, config }, null, 1)
  );
  return 0;
}

async function cmdInfer(values: Record<string, string | undefined>): Promise<number> {
  const modelDir = required(values, "model");
  const datasetPath = required(values, "dataset");
  const imagesDir = required(values, "images");
  const detectionsOut = required(values, "detections-out");

  const checkpointFile = path.join(modelDir, CHECKPOINT);
  if (!fs.existsSync(checkpointFile)) {
    console.error(`no checkpoint at ${checkpointFile}`);
    return 2;
  }
  const checkpoint = JSON.parse(fs.readFileSync(checkpointFile, "utf8"));
  const config = checkpoint.config as DetectorTrainConfig;
  const net = new DetectorNet(config, checkpoint.seed as number);
  net.store.loadFrom(modelDir, "detector");

  const dataset = loadDataset(datasetPath);
  const detections: object[] = [];
  for (const record of dataset.records) {
    const imagePath = path.join(imagesDir, record.image_path);
    let image;
    try {
      image = readImage(imagePath);
    } catch {
      console.error(`missing or unreadable image for id ${record.id}`);
      return 2;
    }
    for (const det of detectImage(net, image)) {
      const row = {
        image_id: record.id,
        x1: round3(det.box[0]),
        y1: round3(det.box[1]),
        x2: round3(det.box[2]),
        y2: round3(det.box[3]),
        confidence: round6(det.confidence),
      };
      if (row.x1 >= row.x2 || row.y1 >= row.y2) continue;
      detections.push(detectionSchema.parse(row));
    }
  }

  fs.mkdirSync(path.dirname(detectionsOut), { recursive: true });
  fs.writeFileSync(detectionsOut, JSON.stringify(detections, null, 1) + "\n");
  return 0;
}

function round3(v: number): number {
  return Math.round(v * 1000) / 1000;
}

function round6(v: number): number {
  return Math.round(v * 1e6) / 1e6;
}

function required(values: Record<string, string | undefined>, name: string): string {
  const value = values[name];
  if (!value) {
    console.error(`missing required --${name}`);
    process.exit(2);
  }
  return value;
}

async function main(): Promise<number> {
  const { values, positionals } = parseArgs({
    args: process.argv.slice(2),
    options: {
      dataset: { type: "string" },
      images: { type: "string" },
      seed: { type: "string" },
      config: { type: "string" },
      "model-out": { type: "string" },
      model: { type: "string" },
      "detections-out": { type: "string" },
    },
    allowPositionals: true,
  });
  await tf.setBackend("cpu");
  const command = positionals[0];
  if (command === "train") return cmdTrain(values);
  if (command === "infer") return cmdInfer(values);
  console.error("usage: detector.js <train|infer> ...");
  return 2;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
);
