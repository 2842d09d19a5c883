import * as tf from '@tensorflow/tfjs';
import { mkdtempSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { beforeAll, describe, expect, it } from 'vitest';

import { fixtureLoss, readFixtures } from '../src/fixtures.js';
import { compositeLoss, defaultWeights, downsampleTarget, maskedHuberLoss } from '../src/losses.js';
import { buildModel, runModel } from '../src/model.js';
import { blurforge } from './helpers.js';

describe('loss cross-implementation agreement', () => {
  let fixtureDir: string;

  beforeAll(() => {
    fixtureDir = join(mkdtempSync(join(tmpdir(), 'bffix-')), 'fixtures');
    blurforge(['losscheck', '--export-fixtures', fixtureDir]);
  });

  it('matches the reference breakdown within 1e-5 relative on 20 fixtures', () => {
    const fixtures = readFixtures(fixtureDir);
    expect(fixtures.length).toBe(20);
    for (const fixture of fixtures) {
      const ours = fixtureLoss(fixture);
      for (const [key, expected] of Object.entries(fixture.expected)) {
        const got = ours[key];
        const rel = Math.abs(got - expected) / Math.max(Math.abs(expected), 1e-6);
        expect(rel, `${fixture.name}.${key}: got ${got}, want ${expected}`)
          .toBeLessThanOrEqual(1e-5);
      }
    }
  });
});

describe('loss building blocks', () => {
  it('huber returns zero on an empty mask', () => {
    const z = tf.zeros([1, 4, 4, 1]) as tf.Tensor4D;
    const reg = tf.rand([1, 4, 4, 1], Math.random) as tf.Tensor4D;
    expect(maskedHuberLoss(reg, z, z, 0.1).dataSync()[0]).toBe(0);
  });

  it('downsamples targets by area average then re-binarizes', () => {
    const t = tf.tensor4d([1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 0],
                          [1, 4, 4, 1]);
    const out = downsampleTarget(t, 2);
    expect(Array.from(out.dataSync())).toEqual([1, 0, 1, 1]);
  });

  it('zero regression weight leaves regression-head gradients at zero', () => {
    const model = buildModel(4, 7);
    const x = tf.rand([2, 16, 16, 3], Math.random) as tf.Tensor4D;
    const yMask = tf.cast(tf.greater(tf.rand([2, 16, 16, 1], Math.random), 0.5),
                          'float32') as tf.Tensor4D;
    const yReg = tf.mul(tf.rand([2, 16, 16, 1], Math.random), yMask) as tf.Tensor4D;
    const weights = { ...defaultWeights, lambdaReg: 0 };
    const { grads } = tf.variableGrads(() => {
      const out = runModel(model, x);
      return compositeLoss(tf.sigmoid(out.maskLogits), out.regMap, out.auxProbs,
                           yMask, yReg, weights).total;
    });
    // outputs are [maskLogits, regMap, aux]: find the regMap conv by name
    const regLayerName = (model.outputs[1] as unknown as { sourceLayer: { name: string } })
      .sourceLayer.name;
    const regVars = Object.keys(grads).filter((name) => name.startsWith(`${regLayerName}/`));
    expect(regVars.length).toBeGreaterThan(0);
    for (const name of regVars) {
      const values = Array.from(grads[name].dataSync());
      expect(Math.max(...values.map(Math.abs))).toBe(0);
    }
  });
});
