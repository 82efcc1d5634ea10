/** Translator adapter CLI.
 *
 *   translator.js train --day <dir> --night <dir> --model-out <dir> [--config <json>]
 *   translator.js translate --model <dir> --manifest <path>
 *
 * `translate` honors the pipeline's manifest contract: every
 * expected_output_file is produced with the source image's dimensions, and the
 * process exits non-zero if any entry cannot be completed. A model directory
 * containing {"kind": "identity"} copies sources byte-for-byte, which is
 * handy for plumbing tests.
 */
import * as fs from "fs";
import * as path from "path";
import { parseArgs } from "util";
import * as tf from "@tensorflow/tfjs";
import { loadManifest, loadTranslatorConfig, TranslatorTrainConfig } from "./config";
import { DivergenceError, loadDayToNightGenerator, trainCycleGan, translateImage } from "./gan";
import { fromTensor, readImage, writePng } from "./images";

const CHECKPOINT = "checkpoint.json";

async function cmdTrain(values: Record<string, string | undefined>): Promise<number> {
  const dayDir = required(values, "day");
  const nightDir = required(values, "night");
  const modelOut = required(values, "model-out");
  const config = loadTranslatorConfig(values.config);

  let models;
  try {
    models = trainCycleGan(dayDir, nightDir, config, (iter, l) => {
      console.log(
        `iter=${iter} g_adv_night=${l.gAdvNight.toFixed(6)} g_adv_day=${l.gAdvDay.toFixed(6)} ` +
          `cycle=${l.cycle.toFixed(6)} d_night=${l.dNight.toFixed(6)} d_day=${l.dDay.toFixed(6)}`
      );
    });
  } catch (err) {
    if (err instanceof DivergenceError) {
      console.error(`translator training diverged: ${err.message}`);
      return 3;
    }
    throw err;
  }

  fs.mkdirSync(modelOut, { recursive: true });
  models.dayToNight.store.save(modelOut, config.generators.day_to_night);
  models.nightToDay.store.save(modelOut, config.generators.night_to_day);
  models.discNight.store.save(modelOut, config.discriminators.night);
  models.discDay.store.save(modelOut, config.discriminators.day);
  fs.writeFileSync(
    path.join(modelOut, CHECKPOINT),
    JSON.stringify({ kind: "cyclegan", config }, null, 1)
  );
  return 0;
}

async function cmdTranslate(values: Record<string, string | undefined>): Promise<number> {
  const modelDir = required(values, "model");
  const manifestPath = required(values, "manifest");
  const manifest = loadManifest(manifestPath);

  const checkpointFile = path.join(modelDir, CHECKPOINT);
  if (!fs.existsSync(checkpointFile)) {
    console.error(`no checkpoint at ${checkpointFile}`);
    return 2;
  }
  const checkpoint = JSON.parse(fs.readFileSync(checkpointFile, "utf8"));

  if (checkpoint.kind === "identity") {
    for (const entry of manifest.entries) {
      if (!fs.existsSync(entry.source_file)) {
        console.error(`missing source image for id ${entry.id}`);
        return 2;
      }
      fs.mkdirSync(path.dirname(entry.expected_output_file), { recursive: true });
      fs.copyFileSync(entry.source_file, entry.expected_output_file);
    }
    return 0;
  }

  const config = checkpoint.config as TranslatorTrainConfig;
  const generator = loadDayToNightGenerator(modelDir, config);
  for (const entry of manifest.entries) {
    let image;
    try {
      image = readImage(entry.source_file);
    } catch {
      console.error(`unreadable source image for id ${entry.id}`);
      return 2;
    }
    const out = translateImage(generator, image);
    writePng(entry.expected_output_file, fromTensor(out));
    out.dispose();
  }
  for (const entry of manifest.entries) {
    if (!fs.existsSync(entry.expected_output_file)) {
      console.error(`output missing for id ${entry.id}`);
      return 2;
    }
  }
  return 0;
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
      day: { type: "string" },
      night: { type: "string" },
      config: { type: "string" },
      "model-out": { type: "string" },
      model: { type: "string" },
      manifest: { type: "string" },
    },
    allowPositionals: true,
  });
  await tf.setBackend("cpu");
  const command = positionals[0];
  if (command === "train") return cmdTrain(values);
  if (command === "translate") return cmdTranslate(values);
  console.error("usage: translator.js <train|translate> ...");
  return 2;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
);
