/**
 * The toy convolutional classifier and its block grouping.
 *
 * Four functional blocks: two 3x3 conv stages, an embedding layer and the
 * classifier head. Parameters are explicit tf.Variables grouped by block, in
 * the canonical order used by blocks.json, so per-block learning rates from
 * the wire line up by index.
 *
 * Convolutions are computed as im2col (nine shifted slices concatenated over
 * channels) followed by a matmul. That keeps the whole backward pass on
 * kernels the WASM backend implements; tf.conv2d's filter gradient has no
 * WASM kernel.
 */

import * as tf from "@tensorflow/tfjs";

import { IMAGE_SIZE, NUM_CLASSES } from "./digits";
import { Rng } from "./rng";

export const BLOCK_NAMES = ["stem", "features", "embed", "head"] as const;

const STEM_FILTERS = 8;
const FEATURE_FILTERS = 16;
const EMBED_UNITS = 24;
// after two valid 3x3 convs and two 2x2 pools: 12 -> 10 -> 5 -> 3 -> 1
const FLAT_FEATURES = FEATURE_FILTERS;

export interface BlockVariables {
  name: string;
  variables: tf.Variable[];
}

export interface SavedWeights {
  shapes: number[][];
  values: number[][];
}

/** Valid 3x3 convolution via im2col: slices + concat + matmul (+ bias). */
function conv3x3(
  x: tf.Tensor4D,
  kernel: tf.Variable, // [9 * cin, cout]
  bias: tf.Variable, // [cout]
  cin: number,
  cout: number,
): tf.Tensor4D {
  const [n, h, w] = [x.shape[0], x.shape[1], x.shape[2]];
  const oh = h - 2;
  const ow = w - 2;
  const patches: tf.Tensor[] = [];
  for (let dy = 0; dy < 3; dy++) {
    for (let dx = 0; dx < 3; dx++) {
      patches.push(tf.slice(x, [0, dy, dx, 0], [n, oh, ow, cin]));
    }
  }
  const stacked = tf.concat(patches, 3); // [n, oh, ow, 9*cin]
  const flat = tf.reshape(stacked, [n * oh * ow, 9 * cin]);
  const out = tf.add(tf.matMul(flat, kernel), bias);
  return tf.reshape(out, [n, oh, ow, cout]) as tf.Tensor4D;
}

function heInit(rng: Rng, shape: number[], fanIn: number): tf.Tensor {
  const std = Math.sqrt(2.0 / fanIn);
  const size = shape.reduce((a, b) => a * b, 1);
  const values = new Float32Array(size);
  for (let i = 0; i < size; i++) {
    values[i] = rng.normal() * std;
  }
  return tf.tensor(values, shape);
}

let instanceCounter = 0;

export class ToyCnn {
  readonly blocks: BlockVariables[];

  constructor(initSeed = 7) {
    const rng = new Rng(initSeed * 2654435761);
    // variable names must be unique across the tf registry, so each model
    // instance gets its own prefix
    const prefix = `m${instanceCounter++}`;
    const make = (name: string, shape: number[], fanIn: number) =>
      tf.variable(heInit(rng, shape, fanIn), true, `${prefix}/${name}`);
    const zeros = (name: string, units: number) =>
      tf.variable(tf.zeros([units]), true, `${prefix}/${name}`);
    this.blocks = [
      {
        name: "stem",
        variables: [make("stem/kernel", [9, STEM_FILTERS], 9), zeros("stem/bias", STEM_FILTERS)],
      },
      {
        name: "features",
        variables: [
          make("features/kernel", [9 * STEM_FILTERS, FEATURE_FILTERS], 9 * STEM_FILTERS),
          zeros("features/bias", FEATURE_FILTERS),
        ],
      },
      {
        name: "embed",
        variables: [
          make("embed/weights", [FLAT_FEATURES, EMBED_UNITS], FLAT_FEATURES),
          zeros("embed/bias", EMBED_UNITS),
        ],
      },
      {
        name: "head",
        variables: [
          make("head/weights", [EMBED_UNITS, NUM_CLASSES], EMBED_UNITS),
          zeros("head/bias", NUM_CLASSES),
        ],
      },
    ];
  }

  /** Logits for a batch of [n, IMAGE_SIZE, IMAGE_SIZE, 1] images. */
  forward(x: tf.Tensor4D): tf.Tensor2D {
    const [k1, b1] = this.blocks[0].variables;
    const [k2, b2] = this.blocks[1].variables;
    const [w3, b3] = this.blocks[2].variables;
    const [w4, b4] = this.blocks[3].variables;
    let t = tf.relu(conv3x3(x, k1, b1, 1, STEM_FILTERS));
    t = tf.maxPool(t as tf.Tensor4D, 2, 2, "valid");
    t = tf.relu(conv3x3(t as tf.Tensor4D, k2, b2, STEM_FILTERS, FEATURE_FILTERS));
    t = tf.maxPool(t as tf.Tensor4D, 2, 2, "valid");
    const flat = tf.reshape(t, [x.shape[0], FLAT_FEATURES]);
    const embedded = tf.relu(tf.add(tf.matMul(flat, w3), b3));
    return tf.add(tf.matMul(embedded, w4), b4) as tf.Tensor2D;
  }

  allVariables(): tf.Variable[] {
    return this.blocks.flatMap((b) => b.variables);
  }

  blockParamCounts(): number[] {
    return this.blocks.map((b) => b.variables.reduce((total, v) => total + v.size, 0));
  }

  exportWeights(): SavedWeights {
    const weights = this.allVariables();
    return {
      shapes: weights.map((w) => w.shape.slice()),
      values: weights.map((w) => Array.from(w.dataSync())),
    };
  }

  importWeights(saved: SavedWeights): void {
    const variables = this.allVariables();
    if (saved.values.length !== variables.length) {
      throw new Error(
        `saved weights hold ${saved.values.length} tensors, model has ${variables.length}`,
      );
    }
    variables.forEach((variable, i) => {
      const tensor = tf.tensor(saved.values[i], saved.shapes[i]);
      variable.assign(tensor);
      tensor.dispose();
    });
  }

  /** Raw little-endian float bytes per tensor; for immutability checks. */
  weightBytes(): Uint8Array[] {
    return this.allVariables().map(
      (w) => new Uint8Array((w.dataSync() as Float32Array).buffer.slice(0)),
    );
  }

  dispose(): void {
    this.allVariables().forEach((v) => v.dispose());
  }

  static expectedInputSize(): number {
    return IMAGE_SIZE;
  }
}
