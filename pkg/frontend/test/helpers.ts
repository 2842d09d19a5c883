// Test scaffolding: synthesize source PNGs and drive the generator CLI,
// which is the only interface the trainer consumes.

import { execFileSync } from 'child_process';
import { mkdirSync, writeFileSync } from 'fs';
import { join } from 'path';
import { writeGray8 } from '../src/png.js';
import { encode } from 'fast-png';

export function blurforge(args: string[]): string {
  return execFileSync('blurforge', args, { encoding: 'utf-8' });
}

function hashNoise(x: number, y: number, seed: number): number {
  // deterministic per-pixel noise in [0, 1)
  let h = (x * 374761393 + y * 668265263 + seed * 2147483647) | 0;
  h = Math.imul(h ^ (h >>> 13), 1274126177);
  return ((h ^ (h >>> 16)) >>> 0) / 4294967296;
}

export function writeTexturedRgb(path: string, size: number, seed: number): void {
  // high-frequency noise over a smooth base, so motion blur visibly
  // destroys local contrast
  const data = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 3;
      for (let c = 0; c < 3; c++) {
        const base = 0.5 + 0.25 * Math.sin(x / (2.5 + c) + seed + c) * Math.cos(y / (3.5 - c));
        const noise = hashNoise(x, y, seed * 3 + c);
        data[i + c] = Math.round(255 * Math.min(Math.max(0.35 * base + 0.65 * noise, 0), 1));
      }
    }
  }
  writeFileSync(path, encode({ width: size, height: size, data, channels: 3, depth: 8 }));
}

export function writeSquareMask(path: string, size: number, lo: number, hi: number): void {
  const data = new Float32Array(size * size);
  for (let y = lo; y < hi; y++) {
    for (let x = lo; x < hi; x++) data[y * size + x] = 1.0;
  }
  writeGray8(path, { width: size, height: size, data });
}

export interface DatasetOptions {
  nSources?: number;
  size?: number;
  stage?: number;
  coverageProbs?: [number, number, number];
  strengthRange?: [number, number];
  seed?: number;
  maskRatio?: number;
}

/** Generate a dataset through the CLI; returns the manifest path. */
export function makeDataset(root: string, opts: DatasetOptions = {}): string {
  const { nSources = 4, size = 64, stage = 3, coverageProbs = [0.0, 1.0, 0.0],
          strengthRange = [5, 10], seed = 11, maskRatio = 0.0 } = opts;
  const srcDir = join(root, 'src');
  mkdirSync(srcDir, { recursive: true });
  const sources = [];
  for (let i = 0; i < nSources; i++) {
    const image = join(srcDir, `img_${i}.png`);
    const mask = join(srcDir, `img_${i}_m.png`);
    writeTexturedRgb(image, size, i + 1);
    const lo = 12 + (i % 3) * 4;
    writeSquareMask(mask, size, lo, lo + Math.floor(size / 2.5));
    sources.push({ image, masks: [mask] });
  }
  const config = {
    mask_ratio: maskRatio,
    coverage_probs: coverageProbs,
    curriculum_stage: stage,
    samples_per_source: 1,
    strength_range: strengthRange,
    global_seed: seed,
    val_fraction: 1.0 / (2 * nSources), // floors to zero val sources
    sources,
  };
  const cfgPath = join(root, 'config.json');
  writeFileSync(cfgPath, JSON.stringify(config, null, 2));
  const outDir = join(root, 'data');
  blurforge(['generate', '--config', cfgPath, '--out', outDir]);
  return join(outDir, 'manifest.jsonl');
}
