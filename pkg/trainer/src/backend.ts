/**
 * Backend selection: the WASM backend (bundled binary, no downloads) is an
 * order of magnitude faster than the plain-JS CPU kernels. Threading is
 * pinned to 1 so reductions stay bit-deterministic across runs; the JS CPU
 * backend remains a fallback.
 */

import * as path from "path";

import * as tf from "@tensorflow/tfjs";
import { setThreadsCount, setWasmPaths } from "@tensorflow/tfjs-backend-wasm";

export async function initBackend(): Promise<string> {
  try {
    const wasmDir = path.dirname(
      require.resolve("@tensorflow/tfjs-backend-wasm/dist/tfjs-backend-wasm.wasm"),
    );
    setWasmPaths(wasmDir + path.sep);
    setThreadsCount(1);
    if (await tf.setBackend("wasm")) {
      await tf.ready();
      return "wasm";
    }
  } catch (err) {
    console.error(`wasm backend unavailable (${err}); falling back to cpu`);
  }
  await tf.setBackend("cpu");
  await tf.ready();
  return "cpu";
}
