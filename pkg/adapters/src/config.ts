/** Adapter configs and the wire schemas shared with the pipeline service. */
import * as fs from "fs";
import { z } from "zod";

export const translatorTrainConfigSchema = z
  .object({
    epochs: z.number().int().min(1).default(100),
    batch_size: z.number().int().min(1).default(1),
    image_side: z.number().int().min(8).default(256),
    skip_connections: z.boolean().default(false),
    generators: z
      .object({ day_to_night: z.string(), night_to_day: z.string() })
      .default({ day_to_night: "g_night", night_to_day: "g_day" }),
    discriminators: z
      .object({ night: z.string(), day: z.string() })
      .default({ night: "d_night", day: "d_day" }),
    cycle_loss_weight: z.number().positive().default(10.0),
    learning_rate: z.number().positive().default(2e-4),
    base_filters: z.number().int().min(4).default(16),
    seed: z.number().int().default(0),
  })
  .strict();

export type TranslatorTrainConfig = z.infer<typeof translatorTrainConfigSchema>;

export const detectorTrainConfigSchema = z
  .object({
    anchor_scales: z.array(z.number().positive()).min(1).default([4, 8, 16, 32]),
    anchor_ratios: z.array(z.number().positive()).min(1).default([0.5, 1, 2]),
    constant_lr_iterations: z.number().int().min(0).default(70000),
    decay_iterations: z.number().int().min(0).default(30000),
    batch_size: z.number().int().min(1).default(1),
    horizontal_flip: z.boolean().default(true),
    backbone_init: z.string().default("random"),
    image_side: z.number().int().min(16).default(256),
    learning_rate: z.number().positive().default(1e-3),
    base_filters: z.number().int().min(4).default(8),
  })
  .strict();

export type DetectorTrainConfig = z.infer<typeof detectorTrainConfigSchema> & {
  total_iterations: number;
};

export function loadTranslatorConfig(file?: string): TranslatorTrainConfig {
  const raw = file ? JSON.parse(fs.readFileSync(file, "utf8")) : {};
  return translatorTrainConfigSchema.parse(raw);
}

export function loadDetectorConfig(file?: string): DetectorTrainConfig {
  const raw = file ? JSON.parse(fs.readFileSync(file, "utf8")) : {};
  const parsed = detectorTrainConfigSchema.parse(raw);
  return { ...parsed, total_iterations: parsed.constant_lr_iterations + parsed.decay_iterations };
}

/** Canonical dataset JSON as produced by the pipeline. */
export const datasetSchema = z.object({
  name: z.string(),
  records: z.array(
    z.object({
      id: z.string(),
      width: z.number().int().positive(),
      height: z.number().int().positive(),
      boxes: z.array(
        z.object({
          x1: z.number(),
          y1: z.number(),
          x2: z.number(),
          y2: z.number(),
          occluded: z.boolean().optional(),
          truncated: z.boolean().optional(),
          category: z.string().optional(),
        })
      ),
      image_path: z.string(),
    }).loose()
  ),
}).loose();

export type Dataset = z.infer<typeof datasetSchema>;

export const manifestSchema = z.object({
  direction: z.string(),
  source_dir: z.string(),
  output_dir: z.string(),
  entries: z.array(
    z.object({
      id: z.string(),
      source_file: z.string(),
      expected_output_file: z.string(),
      sha256: z.string(),
    })
  ),
}).loose();

export type Manifest = z.infer<typeof manifestSchema>;

/** One detection row in the pipeline's detections-file format. */
export const detectionSchema = z.object({
  image_id: z.string(),
  x1: z.number(),
  y1: z.number(),
  x2: z.number(),
  y2: z.number(),
  confidence: z.number().min(0).max(1),
});

export function loadDataset(file: string): Dataset {
  return datasetSchema.parse(JSON.parse(fs.readFileSync(file, "utf8")));
}

export function loadManifest(file: string): Manifest {
  return manifestSchema.parse(JSON.parse(fs.readFileSync(file, "utf8")));
}
