import { mkdtempSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { describe, expect, it } from 'vitest';

import { readGray, readRgb, writeGray16, writeGray8 } from '../src/png.js';
import { writeTexturedRgb } from './helpers.js';

describe('png io', () => {
  const dir = mkdtempSync(join(tmpdir(), 'bfpng-'));

  it('round-trips 8-bit grayscale', () => {
    const data = new Float32Array(12).map(() => Math.random());
    const path = join(dir, 'g8.png');
    writeGray8(path, { width: 4, height: 3, data });
    const back = readGray(path);
    expect(back.width).toBe(4);
    for (let i = 0; i < data.length; i++) {
      expect(Math.abs(back.data[i] - data[i])).toBeLessThanOrEqual(0.5 / 255 + 1e-6);
    }
  });

  it('round-trips 16-bit grayscale at full precision', () => {
    const data = new Float32Array(20).map((_, i) => (i * 3001) % 65536 / 65535);
    const path = join(dir, 'g16.png');
    writeGray16(path, { width: 5, height: 4, data });
    const back = readGray(path);
    for (let i = 0; i < data.length; i++) {
      expect(Math.abs(back.data[i] - data[i])).toBeLessThanOrEqual(0.5 / 65535 + 1e-7);
    }
  });

  it('reads rgb images', () => {
    const path = join(dir, 'rgb.png');
    writeTexturedRgb(path, 16, 3);
    const img = readRgb(path);
    expect(img.width).toBe(16);
    expect(img.height).toBe(16);
    expect(img.data.length).toBe(16 * 16 * 3);
    expect(Math.max(...img.data)).toBeLessThanOrEqual(1.0);
    expect(Math.min(...img.data)).toBeGreaterThanOrEqual(0.0);
  });
});
