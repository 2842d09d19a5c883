// PNG I/O for the three dataset formats: 8-bit RGB images, 8-bit 0/255
// masks, 16-bit intensity maps. Everything is normalized to [0, 1] floats.

import { readFileSync, writeFileSync } from 'fs';
import { decode, encode } from 'fast-png';

export interface GrayImage {
  width: number;
  height: number;
  data: Float32Array; // row-major, [0, 1]
}

export interface RgbImage {
  width: number;
  height: number;
  data: Float32Array; // row-major HWC, [0, 1]
}

export function readGray(path: string): GrayImage {
  const png = decode(readFileSync(path));
  const scale = png.depth === 16 ? 65535 : 255;
  const n = png.width * png.height;
  const out = new Float32Array(n);
  const stride = png.channels;
  for (let i = 0; i < n; i++) {
    out[i] = png.data[i * stride] / scale;
  }
  return { width: png.width, height: png.height, data: out };
}

export function readRgb(path: string): RgbImage {
  const png = decode(readFileSync(path));
  const scale = png.depth === 16 ? 65535 : 255;
  const n = png.width * png.height;
  const out = new Float32Array(n * 3);
  if (png.channels < 3) {
    for (let i = 0; i < n; i++) {
      const v = png.data[i * png.channels] / scale;
      out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = v;
    }
  } else {
    for (let i = 0; i < n; i++) {
      for (let c = 0; c < 3; c++) {
        out[i * 3 + c] = png.data[i * png.channels + c] / scale;
      }
    }
  }
  return { width: png.width, height: png.height, data: out };
}

function quantize(value: number, scale: number): number {
  const v = Math.min(Math.max(value, 0), 1);
  return Math.floor(v * scale + 0.5);
}

export function writeGray8(path: string, img: GrayImage): void {
  const data = new Uint8Array(img.data.length);
  for (let i = 0; i < data.length; i++) data[i] = quantize(img.data[i], 255);
  writeFileSync(path, encode({ width: img.width, height: img.height, data, channels: 1, depth: 8 }));
}

export function writeGray16(path: string, img: GrayImage): void {
  const data = new Uint16Array(img.data.length);
  for (let i = 0; i < data.length; i++) data[i] = quantize(img.data[i], 65535);
  writeFileSync(path, encode({ width: img.width, height: img.height, data, channels: 1, depth: 16 }));
}
