// Loss-fixture exchange: raw float32 tensors + JSON headers written by the
// generator's `losscheck --export-fixtures`, with expected loss values used
// for cross-implementation agreement checks.

import * as tf from '@tensorflow/tfjs';
import { readdirSync, readFileSync } from 'fs';
import { join } from 'path';
import { LossWeights, breakdownValues, compositeLoss, weightsFromSnakeCase } from './losses.js';

export interface Fixture {
  name: string;
  weights: LossWeights;
  tensors: Record<string, { shape: number[]; data: Float32Array }>;
  expected: Record<string, number>;
}

export function readFixtures(dir: string): Fixture[] {
  const fixtures: Fixture[] = [];
  for (const name of readdirSync(dir).sort()) {
    if (!name.startsWith('fixture_')) continue;
    const header = JSON.parse(readFileSync(join(dir, name, 'header.json'), 'utf-8'));
    const tensors: Fixture['tensors'] = {};
    for (const [tname, meta] of Object.entries<{ shape: number[]; file: string }>(header.tensors)) {
      const raw = readFileSync(join(dir, name, meta.file));
      tensors[tname] = {
        shape: meta.shape,
        data: new Float32Array(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength)),
      };
    }
    fixtures.push({
      name,
      weights: weightsFromSnakeCase(header.weights),
      tensors,
      expected: header.expected,
    });
  }
  return fixtures;
}

/** Compute the composite loss breakdown for one fixture with this package's ops. */
export function fixtureLoss(fixture: Fixture): Record<string, number> {
  return tf.tidy(() => {
    const t4 = (name: string): tf.Tensor4D => {
      const { shape, data } = fixture.tensors[name];
      return tf.tensor4d(data, [1, shape[0], shape[1], 1]);
    };
    const breakdown = compositeLoss(
      t4('pred_prob'), t4('reg_map'), [t4('aux_pred_0')],
      t4('target_mask'), t4('target_reg'), fixture.weights,
    );
    return breakdownValues(breakdown);
  });
}
