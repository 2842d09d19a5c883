// Inference: checkpoint + image -> blur-probability mask (8-bit gray) and
// intensity map (16-bit gray), in the same formats the generator emits so
// the predictions flow straight into `blurforge evaluate`.

import * as tf from '@tensorflow/tfjs';
import { readRgb, writeGray16, writeGray8 } from './png.js';
import { loadModel, runModel } from './model.js';

export interface InferResult {
  width: number;
  height: number;
  maskProb: Float32Array;
  intensity: Float32Array;
}

export async function infer(checkpointDir: string, imagePath: string): Promise<InferResult> {
  const model = await loadModel(checkpointDir);
  const image = readRgb(imagePath);
  const result = tf.tidy(() => {
    let x = tf.tensor4d(image.data, [1, image.height, image.width, 3]);
    // two pooling stages: pad to a multiple of 4, crop back afterwards
    const padH = (4 - (image.height % 4)) % 4;
    const padW = (4 - (image.width % 4)) % 4;
    if (padH || padW) {
      x = tf.mirrorPad(x, [[0, 0], [0, padH], [0, padW], [0, 0]], 'symmetric');
    }
    const out = runModel(model, x as tf.Tensor4D);
    const maskProb = tf.sigmoid(out.maskLogits).slice(
      [0, 0, 0, 0], [1, image.height, image.width, 1]);
    const intensity = out.regMap.slice([0, 0, 0, 0], [1, image.height, image.width, 1]);
    return {
      maskProb: maskProb.dataSync() as Float32Array,
      intensity: intensity.dataSync() as Float32Array,
    };
  });
  model.dispose?.();
  return { width: image.width, height: image.height, ...result };
}

export async function inferToFiles(checkpointDir: string, imagePath: string,
                                   outMask: string, outIntensity: string): Promise<void> {
  const r = await infer(checkpointDir, imagePath);
  writeGray8(outMask, { width: r.width, height: r.height, data: r.maskProb });
  writeGray16(outIntensity, { width: r.width, height: r.height, data: r.intensity });
}

const isMain = process.argv[1]?.endsWith('infer.js') || process.argv[1]?.endsWith('infer.ts');
if (isMain) {
  const arg = (name: string): string => {
    const idx = process.argv.indexOf(name);
    if (idx < 0 || idx + 1 >= process.argv.length) {
      console.error('usage: infer --checkpoint DIR --image IN.png --out-mask M.png --out-intensity I.png');
      process.exit(2);
    }
    return process.argv[idx + 1];
  };
  inferToFiles(arg('--checkpoint'), arg('--image'), arg('--out-mask'), arg('--out-intensity'))
    .then(() => console.log('wrote predictions'))
    .catch((err) => {
      console.error(err.message ?? err);
      process.exit(1);
    });
}
