/**
 * Fine-tuning runtime: applies one evaluation request to a fresh copy of the
 * pre-trained model and trains with per-block learning rates, frozen blocks
 * excluded from gradient computation entirely (their parameters are never
 * touched, so they stay bitwise identical).
 */

import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";

import { IMAGE_SIZE, NUM_CLASSES, Sample } from "./digits";
import { SavedWeights, ToyCnn } from "./model";
import { Rng } from "./rng";

const BATCH_SIZE = 32;

export interface FineTuneRequest {
  blockRates: number[];
  frozenMask: number[];
  trainIds: string[];
  seed: number;
  maxEpochs: number;
  patience: number;
}

export interface FineTuneOutcome {
  accuracy: number;
  epochsRun: number;
}

export interface SetupData {
  samples: Map<string, Sample>;
  valIds: string[];
  weights: SavedWeights;
  baseRates: number[];
}

export function loadSetup(setupDir: string): SetupData {
  const dataset = JSON.parse(
    fs.readFileSync(path.join(setupDir, "dataset.json"), "utf-8"),
  ) as { samples: Sample[]; valIds: string[] };
  const weights = JSON.parse(
    fs.readFileSync(path.join(setupDir, "weights.json"), "utf-8"),
  ) as SavedWeights;
  const blocks = JSON.parse(
    fs.readFileSync(path.join(setupDir, "blocks.json"), "utf-8"),
  ) as { name: string; base_rate: number }[];
  const samples = new Map<string, Sample>();
  for (const sample of dataset.samples) {
    samples.set(sample.id, sample);
  }
  return {
    samples,
    valIds: dataset.valIds,
    weights,
    baseRates: blocks.map((b) => b.base_rate),
  };
}

function tensorsFor(samples: Sample[]): { x: tf.Tensor4D; y: tf.Tensor1D } {
  const x = new Float32Array(samples.length * IMAGE_SIZE * IMAGE_SIZE);
  const y = new Int32Array(samples.length);
  samples.forEach((sample, i) => {
    x.set(sample.pixels, i * IMAGE_SIZE * IMAGE_SIZE);
    y[i] = sample.label;
  });
  return {
    x: tf.tensor4d(x, [samples.length, IMAGE_SIZE, IMAGE_SIZE, 1]),
    y: tf.tensor1d(y, "int32"),
  };
}

export function accuracyOf(model: ToyCnn, x: tf.Tensor4D, y: tf.Tensor1D): number {
  return tf.tidy(() => {
    const logits = model.forward(x);
    const correct = logits.argMax(-1).equal(y).mean();
    return correct.dataSync()[0];
  });
}

export interface TrainLoopConfig {
  rates: number[]; // learning rate per block, 0 = frozen
  maxEpochs: number;
  patience: number;
  seed: number;
}

/**
 * Seeded SGD loop with patience-based early stopping on validation accuracy.
 * Returns the best validation accuracy observed and the epochs actually run.
 */
export function trainLoop(
  model: ToyCnn,
  xTrain: tf.Tensor4D,
  yTrain: tf.Tensor1D,
  xVal: tf.Tensor4D,
  yVal: tf.Tensor1D,
  config: TrainLoopConfig,
): FineTuneOutcome {
  const active: { variables: tf.Variable[]; optimizer: tf.Optimizer }[] = [];
  config.rates.forEach((rate, b) => {
    if (rate > 0 && model.blocks[b].variables.length > 0) {
      active.push({
        variables: model.blocks[b].variables,
        optimizer: tf.train.sgd(rate),
      });
    }
  });

  let best = accuracyOf(model, xVal, yVal);
  if (active.length === 0) {
    // everything frozen: no parameter can change, zero-shot accuracy stands
    return { accuracy: best, epochsRun: 0 };
  }

  const varList = active.flatMap((a) => a.variables);
  const count = xTrain.shape[0];
  const rng = new Rng(config.seed >>> 0 || 1);
  const order = [...Array(count).keys()];

  let epochsRun = 0;
  let stale = 0;
  for (let epoch = 0; epoch < config.maxEpochs; epoch++) {
    rng.shuffle(order);
    for (let start = 0; start < count; start += BATCH_SIZE) {
      const indices = order.slice(start, start + BATCH_SIZE);
      tf.tidy(() => {
        const idx = tf.tensor1d(indices, "int32");
        const xBatch = tf.gather(xTrain, idx) as tf.Tensor4D;
        const yBatch = tf.oneHot(tf.gather(yTrain, idx), NUM_CLASSES);
        const { value, grads } = tf.variableGrads(
          () => tf.losses.softmaxCrossEntropy(yBatch, model.forward(xBatch)) as tf.Scalar,
          varList,
        );
        for (const { variables, optimizer } of active) {
          const subset: tf.NamedTensorMap = {};
          for (const variable of variables) {
            if (grads[variable.name] !== undefined) {
              subset[variable.name] = grads[variable.name];
            }
          }
          optimizer.applyGradients(subset);
        }
        value.dispose();
      });
    }
    epochsRun = epoch + 1;
    const accuracy = accuracyOf(model, xVal, yVal);
    if (accuracy > best) {
      best = accuracy;
      stale = 0;
    } else {
      stale += 1;
      if (stale >= config.patience) {
        break;
      }
    }
  }
  active.forEach((a) => a.optimizer.dispose());
  return { accuracy: best, epochsRun };
}

/** Long-lived runtime: one model instance, reset from the saved weights per request. */
export class TrainerRuntime {
  readonly model: ToyCnn;
  private readonly setup: SetupData;
  private readonly xVal: tf.Tensor4D;
  private readonly yVal: tf.Tensor1D;

  constructor(setupDir: string) {
    this.setup = loadSetup(setupDir);
    this.model = new ToyCnn();
    const valSamples = this.setup.valIds.map((id) => this.mustSample(id));
    const val = tensorsFor(valSamples);
    this.xVal = val.x;
    this.yVal = val.y;
  }

  get blockCount(): number {
    return this.model.blocks.length;
  }

  get baseRates(): number[] {
    return [...this.setup.baseRates];
  }

  private mustSample(id: string): Sample {
    const sample = this.setup.samples.get(id);
    if (!sample) {
      throw new Error(`unknown sample id ${id}`);
    }
    return sample;
  }

  /** Validation accuracy of the untouched pre-trained weights. */
  zeroShotAccuracy(): number {
    this.model.importWeights(this.setup.weights);
    return accuracyOf(this.model, this.xVal, this.yVal);
  }

  fineTune(request: FineTuneRequest): FineTuneOutcome {
    if (request.blockRates.length !== this.blockCount) {
      throw new Error(
        `expected ${this.blockCount} block rates, got ${request.blockRates.length}`,
      );
    }
    request.frozenMask.forEach((flag, b) => {
      if (flag === 0 && request.blockRates[b] !== 0) {
        throw new Error(`frozen block ${b} carries non-zero learning rate`);
      }
    });
    if (request.trainIds.length === 0) {
      throw new Error("empty training fold");
    }
    this.model.importWeights(this.setup.weights);
    const train = tensorsFor(request.trainIds.map((id) => this.mustSample(id)));
    try {
      return trainLoop(this.model, train.x, train.y, this.xVal, this.yVal, {
        rates: request.blockRates,
        maxEpochs: request.maxEpochs,
        patience: request.patience,
        seed: request.seed,
      });
    } finally {
      train.x.dispose();
      train.y.dispose();
    }
  }
}
