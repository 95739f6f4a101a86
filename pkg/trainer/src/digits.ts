/**
 * Synthetic digit images rendered from 5x7 glyph bitmaps onto a 12x12 grid
 * with seeded jitter, pixel noise and contrast variation. The "source"
 * variant (used for pre-training) is clean and centered; the "target"
 * variant is noisier, shifted and contrast-perturbed, so fine-tuning on it
 * genuinely moves validation accuracy.
 */

import { Rng } from "./rng";

export const IMAGE_SIZE = 12;
export const NUM_CLASSES = 10;

const GLYPH_ROWS: Record<number, string[]> = {
  0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
  1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
  2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
  3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
  4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
  5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
  6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
  7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
  8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
  9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
};

export interface Sample {
  id: string;
  label: number;
  pixels: number[]; // IMAGE_SIZE * IMAGE_SIZE grayscale in [0, 1]
}

export interface RenderStyle {
  maxShiftX: number; // glyph offset drawn from [center-ish window]
  maxShiftY: number;
  noiseStd: number;
  minContrast: number;
}

export const SOURCE_STYLE: RenderStyle = {
  maxShiftX: 2,
  maxShiftY: 2,
  noiseStd: 0.08,
  minContrast: 0.95,
};

export const TARGET_STYLE: RenderStyle = {
  maxShiftX: 7, // full horizontal range (12 - 5)
  maxShiftY: 5, // full vertical range (12 - 7)
  noiseStd: 0.22,
  minContrast: 0.55,
};

export function renderDigit(digit: number, style: RenderStyle, rng: Rng): number[] {
  const pixels = new Array<number>(IMAGE_SIZE * IMAGE_SIZE).fill(0);
  const glyph = GLYPH_ROWS[digit];
  const offsetX = rng.int(style.maxShiftX + 1);
  const offsetY = rng.int(style.maxShiftY + 1);
  const contrast = rng.uniform(style.minContrast, 1.0);
  for (let r = 0; r < glyph.length; r++) {
    for (let c = 0; c < glyph[r].length; c++) {
      if (glyph[r][c] === "1") {
        const y = r + offsetY;
        const x = c + offsetX;
        if (y < IMAGE_SIZE && x < IMAGE_SIZE) {
          pixels[y * IMAGE_SIZE + x] = contrast;
        }
      }
    }
  }
  for (let i = 0; i < pixels.length; i++) {
    const noisy = pixels[i] + style.noiseStd * rng.normal();
    pixels[i] = Math.round(Math.min(1, Math.max(0, noisy)) * 10000) / 10000;
  }
  return pixels;
}

export function makeDataset(
  count: number,
  style: RenderStyle,
  seed: number,
  idPrefix: string,
): Sample[] {
  const rng = new Rng(seed);
  const samples: Sample[] = [];
  for (let i = 0; i < count; i++) {
    const label = i % NUM_CLASSES;
    samples.push({
      id: `${idPrefix}${String(i).padStart(5, "0")}`,
      label,
      pixels: renderDigit(label, style, rng),
    });
  }
  return samples;
}

/** Stratified split: picks ~fraction of each class for the second part. */
export function stratifiedSplit(
  samples: Sample[],
  fraction: number,
  seed: number,
): { rest: Sample[]; held: Sample[] } {
  const byClass = new Map<number, Sample[]>();
  for (const s of samples) {
    const bucket = byClass.get(s.label) ?? [];
    bucket.push(s);
    byClass.set(s.label, bucket);
  }
  const rng = new Rng(seed);
  const held: Sample[] = [];
  const rest: Sample[] = [];
  for (const label of [...byClass.keys()].sort((a, b) => a - b)) {
    const bucket = rng.shuffle([...byClass.get(label)!]);
    const take = Math.round(bucket.length * fraction);
    held.push(...bucket.slice(0, take));
    rest.push(...bucket.slice(take));
  }
  return { rest, held };
}
