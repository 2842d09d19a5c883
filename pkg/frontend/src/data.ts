// Dataset loading: manifest entries -> sample tensors for training.

import * as tf from '@tensorflow/tfjs';
import { Manifest, ManifestEntry, resolveOutput } from './manifest.js';
import { readGray, readRgb } from './png.js';

export interface Sample {
  id: string;
  width: number;
  height: number;
  image: Float32Array; // HWC
  mask: Float32Array;
  intensity: Float32Array;
}

export function loadSample(manifest: Manifest, entry: ManifestEntry): Sample {
  const image = readRgb(resolveOutput(manifest, entry, 'image'));
  const mask = readGray(resolveOutput(manifest, entry, 'mask'));
  const intensity = readGray(resolveOutput(manifest, entry, 'intensity'));
  if (mask.width !== image.width || mask.height !== image.height
      || intensity.width !== image.width || intensity.height !== image.height) {
    throw new Error(`sample ${entry.id}: output dimensions disagree`);
  }
  return {
    id: entry.id,
    width: image.width,
    height: image.height,
    image: image.data,
    mask: mask.data,
    intensity: intensity.data,
  };
}

export function loadSamples(manifest: Manifest, entries: ManifestEntry[]): Sample[] {
  return entries.map((entry) => loadSample(manifest, entry));
}

export interface Batch {
  x: tf.Tensor4D;
  yMask: tf.Tensor4D;
  yReg: tf.Tensor4D;
}

export function toBatch(samples: Sample[]): Batch {
  const { width, height } = samples[0];
  for (const s of samples) {
    if (s.width !== width || s.height !== height) {
      throw new Error('batched samples must share dimensions');
    }
  }
  const n = samples.length;
  const x = new Float32Array(n * height * width * 3);
  const yMask = new Float32Array(n * height * width);
  const yReg = new Float32Array(n * height * width);
  samples.forEach((s, i) => {
    x.set(s.image, i * height * width * 3);
    yMask.set(s.mask, i * height * width);
    yReg.set(s.intensity, i * height * width);
  });
  return {
    x: tf.tensor4d(x, [n, height, width, 3]),
    yMask: tf.tensor4d(yMask, [n, height, width, 1]),
    yReg: tf.tensor4d(yReg, [n, height, width, 1]),
  };
}

/** Share of blurred pixels across samples; the prevalence target default. */
export function empiricalBlurFraction(samples: Sample[]): number {
  let positive = 0;
  let total = 0;
  for (const s of samples) {
    for (const v of s.mask) positive += v >= 0.5 ? 1 : 0;
    total += s.mask.length;
  }
  return total > 0 ? positive / total : 0;
}

/** Pooled blur-class IoU of thresholded probabilities against binary masks. */
export function pooledIoU(probs: tf.Tensor4D, yMask: tf.Tensor4D, tau = 0.5): number {
  return tf.tidy(() => {
    const p = tf.greaterEqual(probs, tau);
    const g = tf.greaterEqual(yMask, 0.5);
    const tp = tf.sum(tf.cast(tf.logicalAnd(p, g), 'float32')).dataSync()[0];
    const fp = tf.sum(tf.cast(tf.logicalAnd(p, tf.logicalNot(g)), 'float32')).dataSync()[0];
    const fn = tf.sum(tf.cast(tf.logicalAnd(tf.logicalNot(p), g), 'float32')).dataSync()[0];
    const union = tp + fp + fn;
    return union > 0 ? tp / union : 1.0;
  });
}
