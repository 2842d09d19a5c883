// Training harness: curriculum-staged optimization of the dual-head U-Net
// with the composite loss, per-component metrics logging, and plain-file
// checkpoints.

import * as tf from '@tensorflow/tfjs';
import { appendFileSync, mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';
import { Batch, empiricalBlurFraction, loadSamples, pooledIoU, toBatch } from './data.js';
import { registerFastConv2dGradient } from './fastconv.js';
import { LossWeights, breakdownValues, compositeLoss, defaultWeights, weightsFromSnakeCase } from './losses.js';
import { allowedAtStage, checkManifest, readManifest } from './manifest.js';
import { buildModel, loadModel, runModel, saveModel } from './model.js';

export interface TrainConfig {
  manifest: string;
  outDir: string;
  stageEpochs: [number, number, number];
  batchSize: number;
  learningRate: number;
  clipNorm: number; // global gradient-norm ceiling
  weightDecay: number; // decoupled (AdamW-style)
  modelWidth: number;
  seed: number;
  split: 'train' | 'val' | 'all';
  pretrained?: string; // checkpoint dir; fresh random init when absent
  loss: Partial<Record<string, number>>;
}

export const defaultConfig: TrainConfig = {
  manifest: 'data/manifest.jsonl',
  outDir: 'runs/latest',
  stageEpochs: [0, 0, 50],
  batchSize: 8,
  learningRate: 2e-3,
  clipNorm: 5.0,
  weightDecay: 1e-4,
  modelWidth: 8,
  seed: 1,
  split: 'train',
  loss: {},
};

export interface TrainResult {
  checkpointDir: string;
  metricsPath: string;
  finalIoU: number;
  epochsRun: number;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled<T>(items: T[], rand: () => number): T[] {
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

interface StepMetrics {
  loss: number;
  parts: Record<string, number>;
  iou: number;
}

function trainStep(model: tf.LayersModel, batch: Batch, weights: LossWeights,
                   optimizer: tf.Optimizer, clipNorm: number,
                   weightDecay: number, learningRate: number): StepMetrics {
  // per-component values and the training IoU come out of the same forward
  // pass the gradient uses, so logging costs nothing extra
  let parts: Record<string, number> = {};
  let iou = 0;
  const lossFn = (): tf.Scalar => {
    const out = runModel(model, batch.x, true);
    const maskProb = tf.sigmoid(out.maskLogits) as tf.Tensor4D;
    const breakdown = compositeLoss(maskProb, out.regMap, out.auxProbs,
                                    batch.yMask, batch.yReg, weights);
    parts = breakdownValues(breakdown);
    iou = pooledIoU(maskProb, batch.yMask);
    return breakdown.total;
  };
  return tf.tidy(() => {
    const { value, grads } = tf.variableGrads(lossFn);
    // global-norm gradient clipping, then decoupled weight decay
    const names = Object.keys(grads);
    const globalNorm = Math.sqrt(names
      .map((n) => tf.sum(tf.square(grads[n])).dataSync()[0])
      .reduce((a, b) => a + b, 0));
    if (globalNorm > clipNorm) {
      const scale = clipNorm / globalNorm;
      for (const n of names) grads[n] = tf.mul(grads[n], scale);
    }
    optimizer.applyGradients(grads);
    if (weightDecay > 0) {
      for (const v of model.trainableWeights) {
        v.write(tf.mul(v.read(), 1 - learningRate * weightDecay));
      }
    }
    return { loss: value.dataSync()[0], parts, iou };
  });
}

export async function train(config: TrainConfig): Promise<TrainResult> {
  registerFastConv2dGradient();
  const manifest = readManifest(config.manifest);
  checkManifest(manifest);
  mkdirSync(config.outDir, { recursive: true });
  const metricsPath = join(config.outDir, 'metrics.jsonl');
  writeFileSync(metricsPath, '');

  const model = config.pretrained
    ? await loadModel(config.pretrained)
    : buildModel(config.modelWidth, config.seed);
  const optimizer = tf.train.adam(config.learningRate);
  const rand = mulberry32(config.seed * 2654435761 + 13);

  let weights = { ...defaultWeights, ...weightsFromSnakeCase(config.loss as Record<string, number>) };
  let epochsRun = 0;
  let lastIoU = 0;
  for (const stage of [1, 2, 3] as const) {
    const epochs = config.stageEpochs[stage - 1];
    if (epochs <= 0) continue;
    const entries = manifest.entries.filter(
      (e) => (config.split === 'all' || e.split === config.split) && allowedAtStage(e, stage));
    if (entries.length === 0) {
      console.log(`stage ${stage}: no eligible samples, skipping`);
      continue;
    }
    const samples = loadSamples(manifest, entries);
    if (config.loss.p_target === undefined) {
      weights = { ...weights, pTarget: empiricalBlurFraction(samples) };
    }
    const batches: Batch[] = [];
    for (let i = 0; i < samples.length; i += config.batchSize) {
      batches.push(toBatch(samples.slice(i, i + config.batchSize)));
    }
    console.log(`stage ${stage}: ${samples.length} samples, ${epochs} epochs`);
    const decayAt = Math.floor(epochs * 0.7);
    for (let epoch = 0; epoch < epochs; epoch++) {
      if (epoch === decayAt) {
        (optimizer as unknown as { learningRate: number }).learningRate =
          config.learningRate * 0.2;
      }
      let last: StepMetrics | null = null;
      for (const batch of shuffled(batches, rand)) {
        last = trainStep(model, batch, weights, optimizer, config.clipNorm,
                         config.weightDecay, config.learningRate);
        if (!Number.isFinite(last.loss)) {
          throw new Error(`non-finite loss at stage ${stage} epoch ${epoch}: `
            + JSON.stringify(last.parts));
        }
      }
      epochsRun += 1;
      lastIoU = last!.iou;
      appendFileSync(metricsPath,
        JSON.stringify({ stage, epoch, ...last!.parts, train_iou: last!.iou }) + '\n');
    }
    batches.forEach((b) => { b.x.dispose(); b.yMask.dispose(); b.yReg.dispose(); });
  }

  const checkpointDir = join(config.outDir, 'checkpoint');
  await saveModel(model, checkpointDir);
  writeFileSync(join(config.outDir, 'final.json'),
    JSON.stringify({ train_iou: lastIoU, epochs: epochsRun }, null, 2) + '\n');
  return { checkpointDir, metricsPath, finalIoU: lastIoU, epochsRun };
}

export function loadConfig(path: string): TrainConfig {
  const doc = JSON.parse(readFileSync(path, 'utf-8'));
  return { ...defaultConfig, ...doc };
}

const isMain = process.argv[1]?.endsWith('train.js') || process.argv[1]?.endsWith('train.ts');
if (isMain) {
  const idx = process.argv.indexOf('--config');
  if (idx < 0) {
    console.error('usage: train --config config.json');
    process.exit(2);
  }
  train(loadConfig(process.argv[idx + 1]))
    .then((result) => {
      console.log(`done: ${result.epochsRun} epochs, train IoU ${result.finalIoU.toFixed(4)}`);
      console.log(`checkpoint: ${result.checkpointDir}`);
    })
    .catch((err) => {
      console.error(err.message ?? err);
      process.exit(1);
    });
}
