/**
 * End-to-end: the search engine drives this trainer over the wire protocol
 * at the full default budget (population 10, 10 generations, 3 seeds,
 * 30 epochs / patience 3) on the synthetic digit task, and the best
 * discovered configuration must be at least as good as the all-blocks-
 * unfrozen uniform-rate baseline under the same budget, seeds and fold.
 */

import { execFileSync, spawnSync } from "child_process";
import * as fs from "fs";
import * as path from "path";

import { beforeAll, describe, expect, it } from "vitest";

import { initBackend } from "../src/backend";
import { TrainerRuntime } from "../src/training";

const TRAINER_DIR = path.join(__dirname, "..");
const SETUP_DIR = path.join(TRAINER_DIR, "setup");
const WORK_DIR = path.join(TRAINER_DIR, "tmp-e2e");
const RNG_SEED = 42;

function readCsv(file: string): Record<string, string>[] {
  const [header, ...rows] = fs.readFileSync(file, "utf-8").trim().split("\n");
  const names = header.split(",");
  return rows.map((row) => {
    const cells = row.split(",");
    return Object.fromEntries(names.map((name, i) => [name, cells[i]]));
  });
}

beforeAll(async () => {
  expect(fs.existsSync(SETUP_DIR), "run `npm run build && npm run prepare-data` first").toBe(
    true,
  );
  fs.rmSync(WORK_DIR, { recursive: true, force: true });
  fs.mkdirSync(WORK_DIR, { recursive: true });
  await initBackend();
}, 120_000);

describe("full default-budget search against the reference trainer", () => {
  it(
    "completes and is non-inferior to the all-unfrozen uniform-rate baseline",
    () => {
      const blocks = JSON.parse(
        fs.readFileSync(path.join(SETUP_DIR, "blocks.json"), "utf-8"),
      ) as { name: string; base_rate: number; param_count: number }[];
      const outDir = path.join(WORK_DIR, "run");
      const serveJs = path.join(TRAINER_DIR, "dist", "serve.js");
      const configPath = path.join(WORK_DIR, "run.yaml");
      fs.writeFileSync(
        configPath,
        [
          "engine:",
          "  population_size: 10",
          "  elite_count: 3",
          "  max_generations: 10",
          "  seed_count: 3",
          "  fold_count: 3",
          `  rng_seed: ${RNG_SEED}`,
          "blocks:",
          `  names: [${blocks.map((b) => b.name).join(", ")}]`,
          `  base_rates: [${blocks.map((b) => b.base_rate).join(", ")}]`,
          `  param_counts: [${blocks.map((b) => b.param_count).join(", ")}]`,
          "budget:",
          "  max_epochs: 30",
          "  patience: 3",
          "partition:",
          `  labels_file: ${path.join(SETUP_DIR, "labels.csv")}`,
          "trainer:",
          "  kind: external-process",
          `  command: "node ${serveJs} --setup ${SETUP_DIR}"`,
          "  capacity: 1",
          "  timeout: 300",
          "  retry_budget: 1",
          `output_dir: ${outDir}`,
          "top_k: 5",
        ].join("\n") + "\n",
        "utf-8",
      );

      const started = Date.now();
      const run = spawnSync("python3", ["-m", "biotune.cli", "run", configPath], {
        stdio: ["ignore", "pipe", "pipe"],
        timeout: 28 * 60 * 1000,
        encoding: "utf-8",
      });
      const minutes = (Date.now() - started) / 60000;
      if (run.status !== 0) {
        throw new Error(
          `search run failed (exit ${run.status})\nstdout:\n${run.stdout}\nstderr:\n${run.stderr}`,
        );
      }
      expect(minutes).toBeLessThan(30);

      const generations = readCsv(path.join(outDir, "generations.csv"));
      expect(generations.length).toBe(10);
      const topk = readCsv(path.join(outDir, "topk.csv"));
      expect(topk.length).toBe(5);
      const best = topk[0];
      const bestAccuracy = parseFloat(best.mean_accuracy);
      expect(bestAccuracy).toBeGreaterThan(0);

      // baseline: every block unfrozen at its base rate (unit multiplier),
      // trained on the same fold the best record used, with the run's seeds
      const observed = JSON.parse(
        fs.readFileSync(path.join(SETUP_DIR, "observed_folds.json"), "utf-8"),
      ) as Record<string, string[]>;
      const foldIds = observed[best.fold_index];
      expect(foldIds, `observed fold ${best.fold_index}`).toBeDefined();

      const runtime = new TrainerRuntime(SETUP_DIR);
      const seeds = [0, 1, 2].map((i) => RNG_SEED * 1000 + i);
      const accuracies = seeds.map(
        (seed) =>
          runtime.fineTune({
            blockRates: blocks.map((b) => b.base_rate),
            frozenMask: blocks.map(() => 1),
            trainIds: foldIds,
            seed,
            maxEpochs: 30,
            patience: 3,
          }).accuracy,
      );
      const baseline = accuracies.reduce((a, b) => a + b, 0) / accuracies.length;

      // non-inferiority: the search may match the baseline, never trail it
      expect(bestAccuracy).toBeGreaterThanOrEqual(baseline);

      console.error(
        `e2e: best accuracy ${bestAccuracy.toFixed(4)} vs baseline ${baseline.toFixed(4)} ` +
          `(${minutes.toFixed(1)} min)`,
      );
    },
    { timeout: 30 * 60 * 1000 },
  );
});
