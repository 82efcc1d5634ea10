/** Unpaired day/night translator: two generators and two patch discriminators
 * trained with least-squares adversarial losses plus an L1 cycle-reconstruction
 * term, so a day image pushed through night-and-back lands near itself.
 *
 * Networks are built from stride-1 convs with pooling/upsampling (see ops.ts
 * for why), with every initializer seeded: equal seeds give equal loss logs. */
import * as tf from "@tensorflow/tfjs";
import { TranslatorTrainConfig } from "./config";
import { RgbImage, listImages, readImage, toTensor } from "./images";
import { ConvParams, ParamStore } from "./net";
import { convSame, leakyRelu, pool2, up2 } from "./ops";
import { Rng } from "./rng";

export class DivergenceError extends Error {}

export class Generator {
  readonly store = new ParamStore();
  private readonly enc1: ConvParams;
  private readonly enc2: ConvParams;
  private readonly res: [ConvParams, ConvParams][];
  private readonly dec: ConvParams;
  private readonly out: ConvParams;

  constructor(baseFilters: number, readonly skipConnections: boolean, seedBase: number) {
    const f = baseFilters;
    this.enc1 = this.store.conv("enc1", 3, 3, f, seedBase + 1);
    this.enc2 = this.store.conv("enc2", 3, f, 2 * f, seedBase + 2);
    this.res = [0, 1].map((i) => [
      this.store.conv(`res${i}a`, 3, 2 * f, 2 * f, seedBase + 10 + 2 * i),
      this.store.conv(`res${i}b`, 3, 2 * f, 2 * f, seedBase + 11 + 2 * i),
    ]);
    this.dec = this.store.conv("dec", 3, 2 * f, f, seedBase + 20);
    // The optional skip path concatenates the first encoder features onto the
    // decoder output (a copy mechanism; disabled in the default config).
    this.out = this.store.conv("out", 3, skipConnections ? 2 * f : f, 3, seedBase + 21);
  }

  forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      const e1 = tf.relu(convSame(x, this.enc1.w, this.enc1.b)) as tf.Tensor4D;
      const e2 = tf.relu(convSame(pool2(e1), this.enc2.w, this.enc2.b)) as tf.Tensor4D;
      let trunk = e2;
      for (const [a, b] of this.res) {
        const r1 = tf.relu(convSame(trunk, a.w, a.b)) as tf.Tensor4D;
        trunk = tf.add(trunk, convSame(r1, b.w, b.b)) as tf.Tensor4D;
      }
      let d = tf.relu(convSame(up2(trunk), this.dec.w, this.dec.b)) as tf.Tensor4D;
      if (this.skipConnections) {
        d = tf.concat([d, e1], 3) as tf.Tensor4D;
      }
      return tf.tanh(convSame(d, this.out.w, this.out.b)) as tf.Tensor4D;
    });
  }
}

export class Discriminator {
  readonly store = new ParamStore();
  private readonly c1: ConvParams;
  private readonly c2: ConvParams;
  private readonly head: ConvParams;

  constructor(baseFilters: number, seedBase: number) {
    const f = baseFilters;
    this.c1 = this.store.conv("c1", 3, 3, f, seedBase + 1);
    this.c2 = this.store.conv("c2", 3, f, 2 * f, seedBase + 2);
    this.head = this.store.conv("head", 3, 2 * f, 1, seedBase + 3);
  }

  /** Patch logits: one real/fake score per receptive field. */
  forward(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => {
      let h = pool2(leakyRelu(convSame(x, this.c1.w, this.c1.b)) as tf.Tensor4D);
      h = pool2(leakyRelu(convSame(h, this.c2.w, this.c2.b)) as tf.Tensor4D);
      return convSame(h, this.head.w, this.head.b);
    });
  }
}

export interface CycleGanModels {
  dayToNight: Generator;
  nightToDay: Generator;
  discNight: Discriminator;
  discDay: Discriminator;
}

export function buildCycleGan(config: TranslatorTrainConfig): CycleGanModels {
  const base = config.seed * 1000;
  return {
    dayToNight: new Generator(config.base_filters, config.skip_connections, base + 100),
    nightToDay: new Generator(config.base_filters, config.skip_connections, base + 200),
    discNight: new Discriminator(config.base_filters, base + 300),
    discDay: new Discriminator(config.base_filters, base + 400),
  };
}

/** Rebuild the day-to-night generator and assign a saved checkpoint. */
export function loadDayToNightGenerator(modelDir: string, config: TranslatorTrainConfig): Generator {
  const generator = new Generator(config.base_filters, config.skip_connections,
                                  config.seed * 1000 + 100);
  generator.store.loadFrom(modelDir, config.generators.day_to_night);
  return generator;
}

function loadResized(file: string, side: number): tf.Tensor3D {
  const image: RgbImage = readImage(file);
  return tf.tidy(() => {
    const t = toTensor(image);
    if (image.width === side && image.height === side) return t;
    return tf.image.resizeBilinear(t, [side, side]);
  });
}

export interface StepLosses {
  gAdvNight: number;
  gAdvDay: number;
  cycle: number;
  dNight: number;
  dDay: number;
}

export function trainCycleGan(
  dayDir: string,
  nightDir: string,
  config: TranslatorTrainConfig,
  onStep: (iter: number, losses: StepLosses) => void
): CycleGanModels {
  const dayFiles = listImages(dayDir);
  const nightFiles = listImages(nightDir);
  if (dayFiles.length === 0 || nightFiles.length === 0) {
    throw new Error("both day and night directories must contain images");
  }

  const models = buildCycleGan(config);
  const gVars = [...models.dayToNight.store.list(), ...models.nightToDay.store.list()];
  const dNightVars = models.discNight.store.list();
  const dDayVars = models.discDay.store.list();
  const optG = tf.train.adam(config.learning_rate, 0.5);
  const optDN = tf.train.adam(config.learning_rate, 0.5);
  const optDD = tf.train.adam(config.learning_rate, 0.5);

  const rng = new Rng(config.seed + 1);
  const stepsPerEpoch = Math.ceil(
    Math.max(dayFiles.length, nightFiles.length) / config.batch_size
  );
  let iter = 0;

  for (let epoch = 0; epoch < config.epochs; epoch++) {
    const dayOrder = rng.shuffle(dayFiles.map((_, i) => i));
    const nightOrder = rng.shuffle(nightFiles.map((_, i) => i));

    for (let step = 0; step < stepsPerEpoch; step++) {
      const dayBatch: tf.Tensor3D[] = [];
      const nightBatch: tf.Tensor3D[] = [];
      for (let b = 0; b < config.batch_size; b++) {
        const k = step * config.batch_size + b;
        dayBatch.push(loadResized(dayFiles[dayOrder[k % dayOrder.length]], config.image_side));
        nightBatch.push(loadResized(nightFiles[nightOrder[k % nightOrder.length]], config.image_side));
      }
      const day = tf.stack(dayBatch) as tf.Tensor4D;
      const night = tf.stack(nightBatch) as tf.Tensor4D;
      dayBatch.forEach((t) => t.dispose());
      nightBatch.forEach((t) => t.dispose());

      const losses = trainStep(models, day, night, config.cycle_loss_weight,
                               optG, optDN, optDD, gVars, dNightVars, dDayVars);
      day.dispose();
      night.dispose();

      if (Object.values(losses).some((v) => !Number.isFinite(v))) {
        throw new DivergenceError(`non-finite loss at iteration ${iter}`);
      }
      onStep(iter, losses);
      iter++;
    }
  }
  return models;
}

function trainStep(
  models: CycleGanModels,
  day: tf.Tensor4D,
  night: tf.Tensor4D,
  cycleWeight: number,
  optG: tf.Optimizer,
  optDN: tf.Optimizer,
  optDD: tf.Optimizer,
  gVars: tf.Variable[],
  dNightVars: tf.Variable[],
  dDayVars: tf.Variable[]
): StepLosses {
  const logs: Partial<StepLosses> = {};

  optG.minimize(
    () =>
      tf.tidy(() => {
        const fakeNight = models.dayToNight.forward(day);
        const fakeDay = models.nightToDay.forward(night);
        const advNight = tf.mean(tf.square(tf.sub(models.discNight.forward(fakeNight), 1)));
        const advDay = tf.mean(tf.square(tf.sub(models.discDay.forward(fakeDay), 1)));
        const cycleDay = tf.mean(tf.abs(tf.sub(models.nightToDay.forward(fakeNight), day)));
        const cycleNight = tf.mean(tf.abs(tf.sub(models.dayToNight.forward(fakeDay), night)));
        const cycle = tf.add(cycleDay, cycleNight);
        logs.gAdvNight = advNight.dataSync()[0];
        logs.gAdvDay = advDay.dataSync()[0];
        logs.cycle = cycle.dataSync()[0];
        return tf.add(tf.add(advNight, advDay), tf.mul(cycle, cycleWeight)) as tf.Scalar;
      }),
    false,
    gVars
  );

  optDN.minimize(
    () =>
      tf.tidy(() => {
        const fakeNight = models.dayToNight.forward(day);
        const realLoss = tf.mean(tf.square(tf.sub(models.discNight.forward(night), 1)));
        const fakeLoss = tf.mean(tf.square(models.discNight.forward(fakeNight)));
        const loss = tf.mul(tf.add(realLoss, fakeLoss), 0.5) as tf.Scalar;
        logs.dNight = loss.dataSync()[0];
        return loss;
      }),
    false,
    dNightVars
  );

  optDD.minimize(
    () =>
      tf.tidy(() => {
        const fakeDay = models.nightToDay.forward(night);
        const realLoss = tf.mean(tf.square(tf.sub(models.discDay.forward(day), 1)));
        const fakeLoss = tf.mean(tf.square(models.discDay.forward(fakeDay)));
        const loss = tf.mul(tf.add(realLoss, fakeLoss), 0.5) as tf.Scalar;
        logs.dDay = loss.dataSync()[0];
        return loss;
      }),
    false,
    dDayVars
  );

  return logs as StepLosses;
}

/** Run a generator at the image's own size, padding to even dims so the
 * pool/upsample round-trips exactly. */
export function translateImage(generator: Generator, image: RgbImage): tf.Tensor3D {
  return tf.tidy(() => {
    const input = toTensor(image);
    const padH = image.height % 2 === 0 ? 0 : 1;
    const padW = image.width % 2 === 0 ? 0 : 1;
    let x: tf.Tensor3D = input;
    if (padH || padW) {
      x = tf.mirrorPad(input, [[0, padH], [0, padW], [0, 0]], "reflect");
    }
    const out = generator.forward(tf.expandDims(x, 0) as tf.Tensor4D);
    const squeezed = tf.squeeze<tf.Tensor3D>(out, [0]);
    return tf.slice(squeezed, [0, 0, 0], [image.height, image.width, 3]);
  });
}
