// Small dual-head U-Net: shared encoder/decoder, a mask head emitting logits,
// a sigmoid regression head for blur intensity, and one deep-supervision head
// at the half-resolution decoder stage.

import * as tf from '@tensorflow/tfjs';
import { mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';

export interface ModelOutputs {
  maskLogits: tf.Tensor4D;
  regMap: tf.Tensor4D;
  auxProbs: tf.Tensor4D[];
}

export function buildModel(width: number, seed: number): tf.LayersModel {
  let nextSeed = seed;
  const head = (filters: number, activation: 'sigmoid' | null) =>
    tf.layers.conv2d({
      filters,
      kernelSize: 1,
      padding: 'same',
      activation: activation ?? undefined,
      kernelInitializer: tf.initializers.heNormal({ seed: nextSeed++ }),
    });
  // conv(relu) -> batch norm; the normalization is what keeps this tiny net
  // trainable with the sharp ratio losses in the composite objective. The
  // activation lives inside the conv layer so tfjs keeps the unfused Conv2D
  // kernel under gradient tape, where the fast filter gradient applies.
  const block = (filters: number) => (input: tf.SymbolicTensor): tf.SymbolicTensor => {
    const c = tf.layers.conv2d({
      filters,
      kernelSize: 3,
      padding: 'same',
      activation: 'relu',
      kernelInitializer: tf.initializers.heNormal({ seed: nextSeed++ }),
    }).apply(input);
    return tf.layers.batchNormalization().apply(c) as tf.SymbolicTensor;
  };

  const input = tf.input({ shape: [null, null, 3] });
  const e1 = block(width)(block(width)(input as unknown as tf.SymbolicTensor));
  const p1 = tf.layers.maxPooling2d({ poolSize: 2 }).apply(e1) as tf.SymbolicTensor;
  const e2 = block(2 * width)(p1);
  const p2 = tf.layers.maxPooling2d({ poolSize: 2 }).apply(e2) as tf.SymbolicTensor;
  const bottleneck = block(4 * width)(p2);

  const u2 = tf.layers.upSampling2d({ size: [2, 2] }).apply(bottleneck) as tf.SymbolicTensor;
  const d2 = block(2 * width)(
    tf.layers.concatenate().apply([u2, e2]) as tf.SymbolicTensor);
  const aux = head(1, 'sigmoid').apply(d2) as tf.SymbolicTensor;

  const u1 = tf.layers.upSampling2d({ size: [2, 2] }).apply(d2) as tf.SymbolicTensor;
  const d1 = block(width)(
    tf.layers.concatenate().apply([u1, e1]) as tf.SymbolicTensor);

  const maskLogits = head(1, null).apply(d1) as tf.SymbolicTensor;
  const regMap = head(1, 'sigmoid').apply(d1) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: [maskLogits, regMap, aux] });
}

export function runModel(model: tf.LayersModel, x: tf.Tensor4D,
                         training = false): ModelOutputs {
  const [maskLogits, regMap, aux] = model.apply(x, { training }) as tf.Tensor4D[];
  return { maskLogits, regMap, auxProbs: [aux] };
}

// Plain-file checkpointing (no file:// IO handler outside tfjs-node):
// topology + weight specs as JSON, weight data as one raw .bin.

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  mkdirSync(dir, { recursive: true });
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    writeFileSync(join(dir, 'topology.json'), JSON.stringify(artifacts.modelTopology));
    writeFileSync(join(dir, 'weight-specs.json'), JSON.stringify(artifacts.weightSpecs));
    const data = artifacts.weightData as ArrayBuffer;
    writeFileSync(join(dir, 'weights.bin'), Buffer.from(data));
    return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
  }));
}

export async function loadModel(dir: string): Promise<tf.LayersModel> {
  const topology = JSON.parse(readFileSync(join(dir, 'topology.json'), 'utf-8'));
  const weightSpecs = JSON.parse(readFileSync(join(dir, 'weight-specs.json'), 'utf-8'));
  const raw = readFileSync(join(dir, 'weights.bin'));
  const weightData = raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength);
  return tf.loadLayersModel(tf.io.fromMemory({ modelTopology: topology, weightSpecs, weightData }));
}
