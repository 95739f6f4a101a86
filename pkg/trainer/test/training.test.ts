import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";

import { initBackend } from "../src/backend";
import { IMAGE_SIZE, Sample } from "../src/digits";
import { ToyCnn } from "../src/model";
import { loadSetup, trainLoop, TrainerRuntime } from "../src/training";

const SETUP_DIR = path.join(__dirname, "..", "setup");

let runtime: TrainerRuntime;

function foldIds(stride = 3, offset = 0): string[] {
  const lines = fs
    .readFileSync(path.join(SETUP_DIR, "labels.csv"), "utf-8")
    .trim()
    .split("\n");
  return lines.filter((_, i) => i % stride === offset).map((l) => l.split(",")[0]);
}

beforeAll(async () => {
  expect(fs.existsSync(SETUP_DIR), "run `npm run build && npm run prepare-data` first").toBe(
    true,
  );
  await initBackend();
  runtime = new TrainerRuntime(SETUP_DIR);
}, 120_000);

describe("TrainerRuntime", () => {
  it("all blocks frozen returns the zero-shot accuracy and runs no epochs", () => {
    const zeroShot = runtime.zeroShotAccuracy();
    const outcome = runtime.fineTune({
      blockRates: [0, 0, 0, 0],
      frozenMask: [0, 0, 0, 0],
      trainIds: foldIds(),
      seed: 1,
      maxEpochs: 30,
      patience: 3,
    });
    expect(outcome.accuracy).toBe(zeroShot);
    expect(outcome.epochsRun).toBe(0);
  });

  it("identical requests give identical accuracy (full seeding)", () => {
    const request = {
      blockRates: [0.1, 0.0, 0.05, 0.1],
      frozenMask: [1, 0, 1, 1],
      trainIds: foldIds(),
      seed: 7,
      maxEpochs: 8,
      patience: 3,
    };
    const a = runtime.fineTune(request);
    const b = runtime.fineTune(request);
    expect(b.accuracy).toBe(a.accuracy);
    expect(b.epochsRun).toBe(a.epochsRun);

    const fresh = new TrainerRuntime(SETUP_DIR);
    const c = fresh.fineTune(request);
    expect(c.accuracy).toBe(a.accuracy);
    expect(c.epochsRun).toBe(a.epochsRun);
  });

  it("frozen blocks stay bitwise unchanged, unfrozen blocks move", () => {
    runtime.zeroShotAccuracy(); // resets to the pre-trained weights
    const before = runtime.model.weightBytes();
    runtime.fineTune({
      blockRates: [0, 0.1, 0, 0.1],
      frozenMask: [0, 1, 0, 1],
      trainIds: foldIds(),
      seed: 3,
      maxEpochs: 5,
      patience: 5,
    });
    const after = runtime.model.weightBytes();
    // variable order: [stem k, stem b, features k, features b, embed w, embed b, head w, head b]
    const frozenIdx = [0, 1, 4, 5];
    const tunedIdx = [2, 3, 6, 7];
    for (const i of frozenIdx) {
      expect(Buffer.compare(Buffer.from(after[i]), Buffer.from(before[i]))).toBe(0);
    }
    expect(tunedIdx.some((i) => Buffer.compare(Buffer.from(after[i]), Buffer.from(before[i])) !== 0)).toBe(
      true,
    );
  });

  it("caps epochs and stops after exactly `patience` non-improving epochs", () => {
    // a diverging learning rate never improves on the zero-shot accuracy
    const outcome = runtime.fineTune({
      blockRates: [2.0, 2.0, 2.0, 2.0],
      frozenMask: [1, 1, 1, 1],
      trainIds: foldIds(),
      seed: 5,
      maxEpochs: 30,
      patience: 2,
    });
    expect(outcome.epochsRun).toBe(2);
  });

  it("rejects inconsistent requests", () => {
    expect(() =>
      runtime.fineTune({
        blockRates: [0.1, 0.1],
        frozenMask: [1, 1],
        trainIds: foldIds(),
        seed: 1,
        maxEpochs: 5,
        patience: 3,
      }),
    ).toThrow(/block rates/);
    expect(() =>
      runtime.fineTune({
        blockRates: [0.1, 0, 0, 0],
        frozenMask: [0, 0, 0, 0],
        trainIds: foldIds(),
        seed: 1,
        maxEpochs: 5,
        patience: 3,
      }),
    ).toThrow(/frozen block/);
  });
});

describe("head-only fine-tuning on a two-class subset", () => {
  it("beats the majority-class baseline", () => {
    const setup = loadSetup(SETUP_DIR);
    const twoClass = (ids: string[]) =>
      ids.filter((id) => {
        const label = setup.samples.get(id)!.label;
        return label === 0 || label === 1;
      });
    const trainIds = twoClass(foldIds(1));
    const valIds = twoClass(setup.valIds);
    const counts = [0, 0];
    for (const id of trainIds) {
      counts[setup.samples.get(id)!.label] += 1;
    }
    const majority = Math.max(...counts) / (counts[0] + counts[1]);

    const toTensors = (ids: string[]) => {
      const x = new Float32Array(ids.length * IMAGE_SIZE * IMAGE_SIZE);
      const y = new Int32Array(ids.length);
      ids.forEach((id, i) => {
        const sample = setup.samples.get(id) as Sample;
        x.set(sample.pixels, i * IMAGE_SIZE * IMAGE_SIZE);
        y[i] = sample.label;
      });
      return {
        x: tf.tensor4d(x, [ids.length, IMAGE_SIZE, IMAGE_SIZE, 1]),
        y: tf.tensor1d(y, "int32"),
      };
    };

    const model = new ToyCnn();
    model.importWeights(setup.weights);
    const train = toTensors(trainIds);
    const val = toTensors(valIds);
    const outcome = trainLoop(model, train.x, train.y, val.x, val.y, {
      rates: [0, 0, 0, 0.1], // classifier head only
      maxEpochs: 30,
      patience: 3,
      seed: 11,
    });
    expect(outcome.accuracy).toBeGreaterThan(majority);
    train.x.dispose();
    train.y.dispose();
    val.x.dispose();
    val.y.dispose();
    model.dispose();
  });
});
