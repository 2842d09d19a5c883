// Composite training objective on tensors, mirroring the reference
// implementation term for term: BCE + Dice + Focal Tversky segmentation sum,
// mask-gated Huber regression, prevalence regularizer, and deep-supervision
// auxiliary losses against area-downsampled targets.

import * as tf from '@tensorflow/tfjs';

const BCE_CLIP = 1e-7;

export interface LossWeights {
  lambdaSeg: number;
  lambdaReg: number;
  lambdaPrev: number;
  lambdaAux: number;
  alpha: number;
  beta: number;
  gamma: number;
  delta: number;
  epsilon: number;
  pTarget: number;
  segBceWeight: number;
  segDiceWeight: number;
  segFtWeight: number;
}

export const defaultWeights: LossWeights = {
  lambdaSeg: 1.0,
  lambdaReg: 1.0,
  lambdaPrev: 0.1,
  lambdaAux: 0.4,
  alpha: 0.7,
  beta: 0.3,
  gamma: 4.0 / 3.0,
  delta: 0.1,
  epsilon: 1e-6,
  pTarget: 0.5,
  segBceWeight: 1.0,
  segDiceWeight: 1.0,
  segFtWeight: 1.0,
};

/** Map the python-named fixture/config keys onto LossWeights. */
export function weightsFromSnakeCase(doc: Record<string, number>): LossWeights {
  const w = { ...defaultWeights };
  const names: Record<string, keyof LossWeights> = {
    lambda_seg: 'lambdaSeg', lambda_reg: 'lambdaReg', lambda_prev: 'lambdaPrev',
    lambda_aux: 'lambdaAux', alpha: 'alpha', beta: 'beta', gamma: 'gamma',
    delta: 'delta', epsilon: 'epsilon', p_target: 'pTarget',
    seg_bce_weight: 'segBceWeight', seg_dice_weight: 'segDiceWeight',
    seg_ft_weight: 'segFtWeight',
  };
  for (const [key, value] of Object.entries(doc)) {
    const name = names[key];
    if (name !== undefined) w[name] = value;
  }
  return w;
}

export function bceLoss(predProb: tf.Tensor, target: tf.Tensor): tf.Scalar {
  const p = tf.clipByValue(predProb, BCE_CLIP, 1 - BCE_CLIP);
  const nll = tf.add(tf.mul(target, tf.log(p)),
                     tf.mul(tf.sub(1, target), tf.log(tf.sub(1, p))));
  return tf.neg(tf.mean(nll)) as tf.Scalar;
}

export function diceLoss(predProb: tf.Tensor, target: tf.Tensor, eps: number): tf.Scalar {
  const inter = tf.sum(tf.mul(predProb, target));
  const num = tf.add(tf.mul(inter, 2), eps);
  const den = tf.add(tf.add(tf.sum(predProb), tf.sum(target)), eps);
  return tf.sub(1, tf.div(num, den));
}

export function tverskyIndex(predProb: tf.Tensor, target: tf.Tensor,
                             alpha: number, beta: number, eps: number): tf.Scalar {
  const inter = tf.sum(tf.mul(predProb, target));
  const fn = tf.sum(tf.mul(tf.sub(1, predProb), target));
  const fp = tf.sum(tf.mul(predProb, tf.sub(1, target)));
  const den = tf.add(tf.add(inter, tf.add(tf.mul(fn, alpha), tf.mul(fp, beta))), eps);
  return tf.div(tf.add(inter, eps), den);
}

export function focalTverskyLoss(predProb: tf.Tensor, target: tf.Tensor,
                                 alpha: number, beta: number, gamma: number,
                                 eps: number): tf.Scalar {
  const shortfall = tf.relu(tf.sub(1, tverskyIndex(predProb, target, alpha, beta, eps)));
  return tf.pow(shortfall, gamma);
}

/** Huber over pixels where the mask is positive; 0 when the mask is empty. */
export function maskedHuberLoss(regMap: tf.Tensor, targetReg: tf.Tensor,
                                targetMask: tf.Tensor, delta: number): tf.Scalar {
  const inside = tf.cast(tf.greater(targetMask, 0), 'float32');
  const absR = tf.abs(tf.sub(regMap, targetReg));
  // branch-free Huber: 0.5 min(|r|, d)^2 + d relu(|r| - d) equals the
  // quadratic/linear split exactly and keeps the graph differentiable
  const clipped = tf.minimum(absR, delta);
  const perPixel = tf.add(tf.mul(tf.square(clipped), 0.5),
                          tf.mul(tf.relu(tf.sub(absR, delta)), delta));
  // inside sums to an integer count, so max(count, 1) matches the
  // mean-over-mask definition while avoiding 0/0 on empty masks
  const count = tf.maximum(tf.sum(inside), 1);
  return tf.div(tf.sum(tf.mul(perPixel, inside)), count) as tf.Scalar;
}

export function prevalenceLoss(predProb: tf.Tensor, pTarget: number): tf.Scalar {
  return tf.square(tf.sub(tf.mean(predProb), pTarget)) as tf.Scalar;
}

/** Area-average a binary target down by an integer factor, re-binarize at 0.5. */
export function downsampleTarget(target: tf.Tensor4D, factor: number): tf.Tensor4D {
  const pooled = tf.avgPool(target, factor, factor, 'valid');
  return tf.cast(tf.greaterEqual(pooled, 0.5), 'float32') as tf.Tensor4D;
}

export function auxLoss(auxPreds: tf.Tensor4D[], target: tf.Tensor4D,
                        eps: number): tf.Scalar {
  if (auxPreds.length === 0) throw new Error('auxLoss needs at least one scale');
  let total: tf.Scalar = tf.scalar(0);
  for (const pred of auxPreds) {
    const factor = target.shape[1]! / pred.shape[1]!;
    if (!Number.isInteger(factor)) {
      throw new Error(`aux scale ${pred.shape} does not divide target ${target.shape}`);
    }
    const t = downsampleTarget(target, factor);
    total = tf.add(total, tf.add(bceLoss(pred, t), diceLoss(pred, t, eps)));
  }
  return tf.div(total, auxPreds.length);
}

export interface LossBreakdown {
  total: tf.Scalar;
  seg: tf.Scalar;
  bce: tf.Scalar;
  dice: tf.Scalar;
  focalTversky: tf.Scalar;
  reg: tf.Scalar;
  prev: tf.Scalar;
  aux: tf.Scalar;
}

export function compositeLoss(maskProb: tf.Tensor4D, regMap: tf.Tensor4D,
                              auxPreds: tf.Tensor4D[], targetMask: tf.Tensor4D,
                              targetReg: tf.Tensor4D, w: LossWeights): LossBreakdown {
  const bce = bceLoss(maskProb, targetMask);
  const dice = diceLoss(maskProb, targetMask, w.epsilon);
  const ft = focalTverskyLoss(maskProb, targetMask, w.alpha, w.beta, w.gamma, w.epsilon);
  const seg = tf.addN([tf.mul(bce, w.segBceWeight), tf.mul(dice, w.segDiceWeight),
                       tf.mul(ft, w.segFtWeight)]) as tf.Scalar;
  const reg = maskedHuberLoss(regMap, targetReg, targetMask, w.delta);
  const prev = prevalenceLoss(maskProb, w.pTarget);
  const aux = auxPreds.length > 0 ? auxLoss(auxPreds, targetMask, w.epsilon) : tf.scalar(0);
  const total = tf.addN([
    tf.mul(seg, w.lambdaSeg), tf.mul(reg, w.lambdaReg),
    tf.mul(prev, w.lambdaPrev), tf.mul(aux, w.lambdaAux),
  ]) as tf.Scalar;
  return { total, seg, bce, dice, focalTversky: ft, reg, prev, aux };
}

export function breakdownValues(b: LossBreakdown): Record<string, number> {
  return {
    total: b.total.dataSync()[0],
    seg: b.seg.dataSync()[0],
    bce: b.bce.dataSync()[0],
    dice: b.dice.dataSync()[0],
    focal_tversky: b.focalTversky.dataSync()[0],
    reg: b.reg.dataSync()[0],
    prev: b.prev.dataSync()[0],
    aux: b.aux.dataSync()[0],
  };
}
