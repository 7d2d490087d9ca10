/**
 * Training data for the toy refiner, derived from a fixtures directory
 * (labels/*.png written by the Python pipeline's fixture generator).
 *
 * Each sample mimics one refinement step: the "cumulative" input is the
 * ground truth one-hot degraded by a strong lossy resize, the "local"
 * input by a weaker one, and the target is the clean label patch.
 */
import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function readLabelPng(file: string): { h: number; w: number; labels: Uint8Array } {
  const png = PNG.sync.read(fs.readFileSync(file));
  const labels = new Uint8Array(png.width * png.height);
  for (let i = 0; i < labels.length; i++) {
    labels[i] = png.data[4 * i]; // grayscale PNG decodes as RGBA with R=G=B
  }
  return { h: png.height, w: png.width, labels };
}

export function listLabelFiles(datasetDir: string): string[] {
  const dir = path.join(datasetDir, "labels");
  if (!fs.existsSync(dir)) throw new Error(`no labels/ directory under ${datasetDir}`);
  return fs
    .readdirSync(dir)
    .filter((f) => f.endsWith(".png"))
    .sort()
    .map((f) => path.join(dir, f));
}

export function oneHot(labels: Uint8Array, h: number, w: number, classes: number): tf.Tensor4D {
  const data = new Float32Array(h * w * classes);
  for (let i = 0; i < h * w; i++) {
    const c = labels[i];
    if (c < classes) data[i * classes + c] = 1.0;
    else for (let k = 0; k < classes; k++) data[i * classes + k] = 1.0 / classes;
  }
  return tf.tensor4d(data, [1, h, w, classes]);
}

/** Lossy round trip: average-pool by `factor`, then resize back up. */
export function degrade(onehot: tf.Tensor4D, factor: number): tf.Tensor4D {
  if (factor <= 1) return onehot.clone();
  return tf.tidy(() => {
    const pooled = tf.avgPool(onehot, factor, factor, "same");
    const [, h, w] = onehot.shape;
    return tf.image.resizeBilinear(pooled, [h, w]) as tf.Tensor4D;
  });
}

export interface SampleSet {
  inputs: tf.Tensor4D; // (N, patch, patch, 2C)
  targets: tf.Tensor4D; // (N, patch, patch, C) one-hot
}

export function buildSamples(
  datasetDir: string,
  classes: number,
  patch: number,
  perImage: number,
  seed: number,
): SampleSet {
  const files = listLabelFiles(datasetDir);
  if (files.length === 0) throw new Error(`no label PNGs under ${datasetDir}`);
  const rand = mulberry32(seed);
  const inputs: tf.Tensor4D[] = [];
  const targets: tf.Tensor4D[] = [];
  for (const file of files) {
    const { h, w, labels } = readLabelPng(file);
    const clean = oneHot(labels, h, w, classes);
    const cumulative = degrade(clean, 4);
    const local = degrade(clean, 2);
    for (let i = 0; i < perImage; i++) {
      const y0 = Math.floor(rand() * Math.max(1, h - patch));
      const x0 = Math.floor(rand() * Math.max(1, w - patch));
      tf.tidy(() => {
        const cy = tf.slice(cumulative, [0, y0, x0, 0], [1, patch, patch, classes]);
        const cl = tf.slice(local, [0, y0, x0, 0], [1, patch, patch, classes]);
        const tg = tf.slice(clean, [0, y0, x0, 0], [1, patch, patch, classes]);
        inputs.push(tf.keep(tf.concat([cy, cl], 3) as tf.Tensor4D));
        targets.push(tf.keep(tg.clone() as tf.Tensor4D));
      });
    }
    clean.dispose();
    cumulative.dispose();
    local.dispose();
  }
  const x = tf.concat(inputs, 0) as tf.Tensor4D;
  const t = tf.concat(targets, 0) as tf.Tensor4D;
  inputs.forEach((v) => v.dispose());
  targets.forEach((v) => v.dispose());
  return { inputs: x, targets: t };
}

/** Mean IoU of argmax(pred) vs argmax(target) over every sample. */
export function meanIou(pred: tf.Tensor4D, target: tf.Tensor4D, classes: number): number {
  const p = pred.argMax(3).dataSync();
  const g = target.argMax(3).dataSync();
  const inter = new Array(classes).fill(0);
  const union = new Array(classes).fill(0);
  const predCount = new Array(classes).fill(0);
  const gtCount = new Array(classes).fill(0);
  for (let i = 0; i < p.length; i++) {
    predCount[p[i]] += 1;
    gtCount[g[i]] += 1;
    if (p[i] === g[i]) inter[p[i]] += 1;
  }
  let sum = 0;
  let defined = 0;
  for (let c = 0; c < classes; c++) {
    union[c] = predCount[c] + gtCount[c] - inter[c];
    if (union[c] > 0) {
      sum += inter[c] / union[c];
      defined += 1;
    }
  }
  if (defined === 0) throw new Error("no defined classes in meanIou");
  return sum / defined;
}
