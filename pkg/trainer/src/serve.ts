/**
 * Stdio protocol server: one training request at a time (capacity 1).
 *
 * Usage: node dist/serve.js --setup <dir>
 *
 * Reads newline-delimited EvaluateRequests on stdin, fine-tunes the
 * pre-trained model per request, and writes one response line per request on
 * stdout. Recoverable errors produce status=failed responses and the process
 * stays alive. Observed fold contents are mirrored into
 * <setup>/observed_folds.json for offline baseline comparisons.
 */

import "./quiet";

import * as fs from "fs";
import * as path from "path";
import * as readline from "readline";

import * as tf from "@tensorflow/tfjs";

import { initBackend } from "./backend";
import { failedResponse, okResponse, parseRequest, ProtocolError } from "./protocol";
import { TrainerRuntime } from "./training";

function argValue(flag: string, fallback?: string): string {
  const index = process.argv.indexOf(flag);
  if (index >= 0 && index + 1 < process.argv.length) {
    return process.argv[index + 1];
  }
  if (fallback !== undefined) {
    return fallback;
  }
  throw new Error(`missing required argument ${flag}`);
}

function send(line: string): void {
  process.stdout.write(line + "\n");
}

async function main(): Promise<void> {
  const backend = await initBackend();
  console.error(`backend: ${backend}`);
  const setupDir = argValue("--setup");
  const runtime = new TrainerRuntime(setupDir);
  const foldsPath = path.join(setupDir, "observed_folds.json");
  const observedFolds: Record<string, string[]> = {};

  console.error(
    `trainer ready: ${runtime.blockCount} blocks, zero-shot accuracy ` +
      runtime.zeroShotAccuracy().toFixed(4),
  );

  const lines = readline.createInterface({ input: process.stdin, terminal: false });
  for await (const raw of lines) {
    const line = raw.trim();
    if (!line) {
      continue;
    }
    let requestId = "";
    try {
      const request = parseRequest(line);
      requestId = request.requestId;
      if (request.trainSampleIds === null) {
        send(
          failedResponse(
            requestId,
            "fold_ref mode is not supported by this trainer; send train_sample_ids",
          ),
        );
        continue;
      }
      observedFolds[String(request.foldIndex)] = request.trainSampleIds;
      fs.writeFileSync(foldsPath, JSON.stringify(observedFolds));

      const outcome = runtime.fineTune({
        blockRates: request.blockRates,
        frozenMask: request.frozenMask,
        trainIds: request.trainSampleIds,
        seed: request.seed,
        maxEpochs: request.maxEpochs,
        patience: request.patience,
      });
      send(okResponse(requestId, outcome.accuracy, outcome.epochsRun));
    } catch (err) {
      if (err instanceof ProtocolError) {
        console.error(`discarding malformed request: ${err.message}`);
        continue;
      }
      const message = err instanceof Error ? err.message : String(err);
      console.error(`request ${requestId} failed: ${message}`);
      if (requestId) {
        send(failedResponse(requestId, message));
      }
    }
  }
}

main().catch((err) => {
  console.error(`fatal: ${err}`);
  process.exit(1);
});
