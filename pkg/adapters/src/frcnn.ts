/** Compact two-stage detector: a small convolutional backbone feeds a region
 * proposal head (per-anchor objectness + box deltas), and a second stage
 * scores and refines pooled proposal features. Single class, batch of one.
 *
 * The schedule is the classic one: constant learning rate for the first block
 * of iterations, then a linear decay to zero over the remaining block. */
import * as path from "path";
import * as tf from "@tensorflow/tfjs";
import {
  Box,
  assignAnchors,
  buildAnchors,
  clipBox,
  decodeDeltas,
  encodeDeltas,
  iou,
  nms,
} from "./anchors";
import { Dataset, DetectorTrainConfig } from "./config";
import { RgbImage, readImage, toTensor } from "./images";
import { ConvParams, ParamStore } from "./net";
import { convSame, pool2 } from "./ops";
import { Rng } from "./rng";

export const FEATURE_STRIDE = 4;
const ROI_POOL = 4;
const MAX_PROPOSALS = 16;
const RPN_SAMPLE = 32;

export class EmptyDatasetError extends Error {}

export class DetectorNet {
  readonly store = new ParamStore();
  private readonly b1: ConvParams;
  private readonly b2: ConvParams;
  private readonly b3: ConvParams;
  private readonly trunk: ConvParams;
  private readonly obj: ConvParams;
  private readonly delta: ConvParams;
  private readonly fc: ConvParams;
  private readonly score: ConvParams;
  private readonly refine: ConvParams;
  readonly anchorsPerCell: number;

  constructor(readonly config: DetectorTrainConfig, readonly seed: number) {
    const f = config.base_filters;
    const k = config.anchor_scales.length * config.anchor_ratios.length;
    const base = seed * 1000;
    this.anchorsPerCell = k;

    this.b1 = this.store.conv("backbone/c1", 3, 3, f, base + 1, "he");
    this.b2 = this.store.conv("backbone/c2", 3, f, 2 * f, base + 2, "he");
    this.b3 = this.store.conv("backbone/c3", 3, 2 * f, 4 * f, base + 3, "he");
    this.trunk = this.store.conv("rpn/trunk", 3, 4 * f, 4 * f, base + 10, "he");
    this.obj = this.store.conv("rpn/objectness", 1, 4 * f, k, base + 11, "he");
    this.delta = this.store.conv("rpn/deltas", 1, 4 * f, 4 * k, base + 12, "he");
    this.fc = this.store.dense("roi/fc", ROI_POOL * ROI_POOL * 4 * f, 64, base + 20);
    this.score = this.store.dense("roi/score", 64, 1, base + 21);
    this.refine = this.store.dense("roi/refine", 64, 4, base + 22);
  }

  backbone(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      let h = pool2(tf.relu(convSame(x, this.b1.w, this.b1.b)) as tf.Tensor4D);
      h = pool2(tf.relu(convSame(h, this.b2.w, this.b2.b)) as tf.Tensor4D);
      return tf.relu(convSame(h, this.b3.w, this.b3.b)) as tf.Tensor4D;
    });
  }

  rpn(feat: tf.Tensor4D): { objectness: tf.Tensor4D; deltas: tf.Tensor4D } {
    return tf.tidy(() => {
      const t = tf.relu(convSame(feat, this.trunk.w, this.trunk.b)) as tf.Tensor4D;
      return {
        objectness: convSame(t, this.obj.w, this.obj.b),
        deltas: convSame(t, this.delta.w, this.delta.b),
      };
    });
  }

  roi(crops: tf.Tensor4D): { scoreLogits: tf.Tensor2D; refineDeltas: tf.Tensor2D } {
    return tf.tidy(() => {
      const flat = tf.reshape(crops, [crops.shape[0], -1]);
      const hidden = tf.relu(tf.add(tf.matMul(flat, this.fc.w as tf.Tensor2D), this.fc.b));
      return {
        scoreLogits: tf.add(tf.matMul(hidden as tf.Tensor2D, this.score.w as tf.Tensor2D),
                            this.score.b) as tf.Tensor2D,
        refineDeltas: tf.add(tf.matMul(hidden as tf.Tensor2D, this.refine.w as tf.Tensor2D),
                             this.refine.b) as tf.Tensor2D,
      };
    });
  }

  rpnStageVars(): tf.Variable[] {
    return [...this.store.list("backbone/"), ...this.store.list("rpn/")];
  }

  roiStageVars(): tf.Variable[] {
    return this.store.list("roi/");
  }
}

export function learningRate(iter: number, config: DetectorTrainConfig): number {
  if (iter < config.constant_lr_iterations) return config.learning_rate;
  if (config.decay_iterations === 0) return 0;
  const into = iter - config.constant_lr_iterations;
  return Math.max(0, config.learning_rate * (1 - into / config.decay_iterations));
}

interface Sample {
  image: RgbImage;
  boxes: Box[];
}

function sampleIndices(labels: Int8Array, want: number, wantLabel: number, rng: Rng): number[] {
  const candidates: number[] = [];
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] === wantLabel) candidates.push(i);
  }
  if (candidates.length <= want) return candidates;
  return rng.shuffle(candidates).slice(0, want);
}

/** Normalized [y1, x1, y2, x2] rows for cropAndResize. */
function normalizeBoxes(boxes: Box[], side: number): tf.Tensor2D {
  const rows = boxes.map((b) => [b[1] / side, b[0] / side, b[3] / side, b[2] / side]);
  return tf.tensor2d(rows, [boxes.length, 4]);
}

export interface TrainLog {
  iter: number;
  lr: number;
  rpnCls: number;
  rpnReg: number;
  roiCls: number;
  roiReg: number;
}

export function trainDetector(
  dataset: Dataset,
  imagesDir: string,
  config: DetectorTrainConfig,
  seed: number,
  onStep: (log: TrainLog) => void
): DetectorNet {
  const totalBoxes = dataset.records.reduce((n, r) => n + r.boxes.length, 0);
  if (totalBoxes === 0) {
    throw new EmptyDatasetError("training dataset has no boxes");
  }

  const net = new DetectorNet(config, seed);
  const featSide = config.image_side / FEATURE_STRIDE;
  const anchors = buildAnchors(featSide, featSide, FEATURE_STRIDE,
                               config.anchor_scales, config.anchor_ratios);
  const rpnVars = net.rpnStageVars();
  const roiVars = net.roiStageVars();
  const rng = new Rng(seed + 17);

  const samples: Sample[] = dataset.records.map((record) => {
    const image = readImage(path.join(imagesDir, record.image_path));
    const sx = config.image_side / record.width;
    const sy = config.image_side / record.height;
    return {
      image,
      boxes: record.boxes.map(
        (b) => [b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy] as Box
      ),
    };
  });

  let order: number[] = [];
  let cursor = 0;
  const nextSample = (): Sample => {
    if (cursor >= order.length) {
      order = rng.shuffle(samples.map((_, i) => i));
      cursor = 0;
    }
    return samples[order[cursor++]];
  };

  for (let iter = 0; iter < config.total_iterations; iter++) {
    const lr = learningRate(iter, config);
    const sample = nextSample();
    const flip = config.horizontal_flip && rng.bool(0.5);

    const input = tf.tidy(() => {
      let t = toTensor(sample.image);
      if (sample.image.width !== config.image_side || sample.image.height !== config.image_side) {
        t = tf.image.resizeBilinear(t, [config.image_side, config.image_side]);
      }
      if (flip) t = tf.reverse(t, 1);
      return tf.expandDims(t, 0) as tf.Tensor4D;
    });
    const gts: Box[] = sample.boxes.map((b) =>
      flip ? [config.image_side - b[2], b[1], config.image_side - b[0], b[3]] : [...b] as Box
    );

    const { labels, targets } = assignAnchors(anchors, gts);
    const positives = sampleIndices(labels, RPN_SAMPLE, 1, rng);
    const negatives = sampleIndices(labels, RPN_SAMPLE, 0, rng);
    const sampled = positives.concat(negatives);
    const sampledLabels = positives.map(() => 1).concat(negatives.map(() => 0));

    const log: TrainLog = { iter, lr, rpnCls: 0, rpnReg: 0, roiCls: 0, roiReg: 0 };

    // Stage 1: backbone + RPN.
    const rpnOpt = tf.train.momentum(lr, 0.9);
    rpnOpt.minimize(
      () =>
        tf.tidy(() => {
          const feat = net.backbone(input);
          const { objectness, deltas } = net.rpn(feat);
          const objFlat = tf.reshape(objectness, [-1]);
          const deltaFlat = tf.reshape(deltas, [-1, 4]);

          const clsLogits = tf.gather(objFlat, tf.tensor1d(sampled, "int32"));
          const clsTargets = tf.tensor1d(sampledLabels, "float32");
          const clsLoss = tf.losses.sigmoidCrossEntropy(clsTargets, clsLogits);

          let regLoss: tf.Tensor = tf.scalar(0);
          if (positives.length > 0) {
            const predDeltas = tf.gather(deltaFlat, tf.tensor1d(positives, "int32"));
            const target = tf.tensor2d(
              positives.map((i) => Array.from(targets.slice(i * 4, i * 4 + 4))),
              [positives.length, 4]
            );
            regLoss = tf.losses.huberLoss(target, predDeltas);
          }
          log.rpnCls = clsLoss.dataSync()[0];
          log.rpnReg = regLoss.dataSync()[0];
          return tf.add(clsLoss, regLoss) as tf.Scalar;
        }),
      false,
      rpnVars
    );
    rpnOpt.dispose();

    // Stage 2: proposal scoring/refinement on detached features.
    const roiOpt = tf.train.momentum(lr, 0.9);
    const { proposals, feat } = tf.tidy(() => {
      const f = net.backbone(input);
      const { objectness, deltas } = net.rpn(f);
      const scores = Array.from(tf.sigmoid(tf.reshape(objectness, [-1])).dataSync());
      const deltaRows = tf.reshape(deltas, [-1, 4]).arraySync() as number[][];
      const decoded = anchors.map((a, i) => clipBox(decodeDeltas(a, deltaRows[i]), config.image_side));
      const keep = nms(decoded, scores, 0.7, MAX_PROPOSALS)
        .filter((i) => decoded[i][2] - decoded[i][0] >= 2 && decoded[i][3] - decoded[i][1] >= 2);
      return { proposals: keep.map((i) => decoded[i]), feat: tf.keep(f) };
    });

    if (proposals.length > 0) {
      const roiLabels = proposals.map((p) => {
        let best = 0;
        let bestGt: Box | null = null;
        for (const gt of gts) {
          const ov = iou(p, gt);
          if (ov > best) {
            best = ov;
            bestGt = gt;
          }
        }
        return { positive: best >= 0.5, target: bestGt };
      });
      roiOpt.minimize(
        () =>
          tf.tidy(() => {
            const boxTensor = normalizeBoxes(proposals, config.image_side);
            const crops = tf.image.cropAndResize(
              feat,
              boxTensor,
              tf.zeros([proposals.length], "int32"),
              [ROI_POOL, ROI_POOL]
            );
            const { scoreLogits, refineDeltas } = net.roi(crops);
            const clsTargets = tf.tensor2d(
              roiLabels.map((l) => [l.positive ? 1 : 0]),
              [proposals.length, 1]
            );
            const clsLoss = tf.losses.sigmoidCrossEntropy(clsTargets, scoreLogits);

            let regLoss: tf.Tensor = tf.scalar(0);
            const posIdx = roiLabels.flatMap((l, i) => (l.positive ? [i] : []));
            if (posIdx.length > 0) {
              const predRows = tf.gather(refineDeltas, tf.tensor1d(posIdx, "int32"));
              const targetRows = tf.tensor2d(
                posIdx.map((i) => encodeDeltas(proposals[i], roiLabels[i].target as Box)),
                [posIdx.length, 4]
              );
              regLoss = tf.losses.huberLoss(targetRows, predRows);
            }
            log.roiCls = clsLoss.dataSync()[0];
            log.roiReg = regLoss.dataSync()[0];
            return tf.add(clsLoss, regLoss) as tf.Scalar;
          }),
        false,
        roiVars
      );
    }
    roiOpt.dispose();
    feat.dispose();
    input.dispose();

    if (![log.rpnCls, log.rpnReg, log.roiCls, log.roiReg].every(Number.isFinite)) {
      throw new Error(`non-finite loss at iteration ${iter}`);
    }
    onStep(log);
  }
  return net;
}

export interface RawDetection {
  box: Box; // in the record's own pixel space
  confidence: number;
}

export function detectImage(net: DetectorNet, image: RgbImage): RawDetection[] {
  const config = net.config;
  const side = config.image_side;
  const featSide = side / FEATURE_STRIDE;
  const anchors = buildAnchors(featSide, featSide, FEATURE_STRIDE,
                               config.anchor_scales, config.anchor_ratios);

  const { proposals, scores } = tf.tidy(() => {
    let t = toTensor(image);
    if (image.width !== side || image.height !== side) {
      t = tf.image.resizeBilinear(t, [side, side]);
    }
    const input = tf.expandDims(t, 0) as tf.Tensor4D;
    const feat = net.backbone(input);
    const { objectness, deltas } = net.rpn(feat);
    const objScores = Array.from(tf.sigmoid(tf.reshape(objectness, [-1])).dataSync());
    const deltaRows = tf.reshape(deltas, [-1, 4]).arraySync() as number[][];
    const decoded = anchors.map((a, i) => clipBox(decodeDeltas(a, deltaRows[i]), side));
    const keep = nms(decoded, objScores, 0.7, MAX_PROPOSALS)
      .filter((i) => decoded[i][2] - decoded[i][0] >= 2 && decoded[i][3] - decoded[i][1] >= 2);
    if (keep.length === 0) {
      return { proposals: [] as Box[], scores: [] as number[] };
    }

    const kept = keep.map((i) => decoded[i]);
    const crops = tf.image.cropAndResize(
      feat,
      normalizeBoxes(kept, side),
      tf.zeros([kept.length], "int32"),
      [ROI_POOL, ROI_POOL]
    );
    const { scoreLogits, refineDeltas } = net.roi(crops);
    const conf = Array.from(tf.sigmoid(tf.reshape(scoreLogits, [-1])).dataSync());
    const refineRows = refineDeltas.arraySync() as number[][];
    const refined = kept.map((p, i) => clipBox(decodeDeltas(p, refineRows[i]), side));
    return { proposals: refined, scores: conf };
  });

  const valid = proposals
    .map((box, i) => ({ box, confidence: scores[i] }))
    .filter((d) => d.box[2] - d.box[0] >= 1 && d.box[3] - d.box[1] >= 1);
  const keep = nms(valid.map((d) => d.box), valid.map((d) => d.confidence), 0.5, 10);

  const sx = image.width / side;
  const sy = image.height / side;
  return keep.map((i) => {
    const [x1, y1, x2, y2] = valid[i].box;
    return {
      box: [x1 * sx, y1 * sy, x2 * sx, y2 * sy] as Box,
      confidence: Math.min(1, Math.max(0, valid[i].confidence)),
    };
  });
}
