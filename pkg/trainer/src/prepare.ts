/**
 * One-off setup: synthesize the source/target digit datasets, pre-train the
 * model on the source distribution, and write everything a serving run needs
 * into a setup directory:
 *
 *   weights.json         pre-trained model parameters
 *   dataset.json         target samples (trainable pool + fixed validation split)
 *   blocks.json          canonical block order with base rates and param counts
 *   labels.csv           sample_id,class lines for the trainable pool
 *   meta.json            seeds, sizes, zero-shot accuracy
 *
 * Usage: node dist/prepare.js --out setup [--seed 42]
 */

import "./quiet";

import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";

import { initBackend } from "./backend";
import { makeDataset, stratifiedSplit, SOURCE_STYLE, TARGET_STYLE } from "./digits";
import { BLOCK_NAMES, ToyCnn } from "./model";
import { accuracyOf, trainLoop } from "./training";
import { IMAGE_SIZE } from "./digits";

const SOURCE_SAMPLES = 2400;
const TARGET_SAMPLES = 1200;
const VALIDATION_FRACTION = 0.2;
const PRETRAIN_EPOCHS = 10;
const BASE_RATE = 0.1;

function argValue(flag: string, fallback: string): string {
  const index = process.argv.indexOf(flag);
  return index >= 0 && index + 1 < process.argv.length ? process.argv[index + 1] : fallback;
}

function toTensors(samples: { pixels: number[]; label: number }[]) {
  const x = new Float32Array(samples.length * IMAGE_SIZE * IMAGE_SIZE);
  const y = new Int32Array(samples.length);
  samples.forEach((s, i) => {
    x.set(s.pixels, i * IMAGE_SIZE * IMAGE_SIZE);
    y[i] = s.label;
  });
  return {
    x: tf.tensor4d(x, [samples.length, IMAGE_SIZE, IMAGE_SIZE, 1]),
    y: tf.tensor1d(y, "int32"),
  };
}

async function main(): Promise<void> {
  const backend = await initBackend();
  console.error(`backend: ${backend}`);
  const outDir = argValue("--out", "setup");
  const seed = parseInt(argValue("--seed", "42"), 10);
  fs.mkdirSync(outDir, { recursive: true });

  const source = makeDataset(SOURCE_SAMPLES, SOURCE_STYLE, seed * 31 + 1, "src");
  const target = makeDataset(TARGET_SAMPLES, TARGET_STYLE, seed * 31 + 2, "tgt");
  const { rest: pool, held: validation } = stratifiedSplit(
    target,
    VALIDATION_FRACTION,
    seed * 31 + 3,
  );

  const model = new ToyCnn(seed);
  const sourceSplit = stratifiedSplit(source, 0.1, seed * 31 + 4);
  const train = toTensors(sourceSplit.rest);
  const val = toTensors(sourceSplit.held);
  console.error(`pre-training on ${sourceSplit.rest.length} source samples ...`);
  const outcome = trainLoop(model, train.x, train.y, val.x, val.y, {
    rates: BLOCK_NAMES.map(() => BASE_RATE),
    maxEpochs: PRETRAIN_EPOCHS,
    patience: PRETRAIN_EPOCHS,
    seed: seed * 31 + 5,
  });
  console.error(
    `pre-training done: source val accuracy ${outcome.accuracy.toFixed(4)} ` +
      `after ${outcome.epochsRun} epochs`,
  );

  const targetVal = toTensors(validation);
  const zeroShot = accuracyOf(model, targetVal.x, targetVal.y);
  console.error(`target zero-shot validation accuracy: ${zeroShot.toFixed(4)}`);

  const paramCounts = model.blockParamCounts();
  fs.writeFileSync(path.join(outDir, "weights.json"), JSON.stringify(model.exportWeights()));
  fs.writeFileSync(
    path.join(outDir, "dataset.json"),
    JSON.stringify({
      imageSize: IMAGE_SIZE,
      samples: target,
      valIds: validation.map((s) => s.id),
    }),
  );
  fs.writeFileSync(
    path.join(outDir, "blocks.json"),
    JSON.stringify(
      BLOCK_NAMES.map((name, b) => ({
        name,
        base_rate: BASE_RATE,
        param_count: paramCounts[b],
      })),
      null,
      2,
    ),
  );
  fs.writeFileSync(
    path.join(outDir, "labels.csv"),
    pool.map((s) => `${s.id},${s.label}`).join("\n") + "\n",
  );
  fs.writeFileSync(
    path.join(outDir, "meta.json"),
    JSON.stringify(
      {
        seed,
        source_samples: SOURCE_SAMPLES,
        target_pool: pool.length,
        target_validation: validation.length,
        zero_shot_accuracy: zeroShot,
        pretrain_epochs: outcome.epochsRun,
        source_val_accuracy: outcome.accuracy,
      },
      null,
      2,
    ),
  );
  console.error(`setup written to ${outDir}`);
}

main().catch((err) => {
  console.error(`fatal: ${err}`);
  process.exit(1);
});
