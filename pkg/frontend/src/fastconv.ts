// Faster filter gradients for the convolutions this model trains.
//
// The stock CPU kernel for Conv2DBackpropFilter is a naive 7-deep loop and
// dominates step time. For stride-1, dilation-1, NHWC, 'same'-padded convs
// the filter gradient is exactly k*k shifted inner products,
//   dW[i, j, :, :] = X_pad[:, i:i+H, j:j+W, :]^T . dY,
// which runs through the far faster matmul kernel instead. This override is
// specialized to that case and rejects anything else loudly.

import * as tf from '@tensorflow/tfjs';

let registered = false;

function filterGradViaMatmul(x: tf.Tensor4D, dy: tf.Tensor4D,
                             filterShape: number[]): tf.Tensor4D {
  const [kh, kw, cin, cout] = filterShape;
  const [b, h, w] = x.shape;
  const padTop = (kh - 1) >> 1;
  const padLeft = (kw - 1) >> 1;
  // im2col in plain JS: tf.slice on CPU walks a generic index loop and is
  // slower than this entire gradient
  const xd = x.dataSync() as Float32Array;
  const n = b * h * w;
  const k = kh * kw * cin;
  const cols = new Float32Array(n * k);
  let col = 0;
  for (let bb = 0; bb < b; bb++) {
    for (let y = 0; y < h; y++) {
      for (let xx = 0; xx < w; xx++, col++) {
        const dstBase = col * k;
        for (let i = 0; i < kh; i++) {
          const sy = y + i - padTop;
          if (sy < 0 || sy >= h) continue;
          for (let j = 0; j < kw; j++) {
            const sx = xx + j - padLeft;
            if (sx < 0 || sx >= w) continue;
            const src = ((bb * h + sy) * w + sx) * cin;
            const dst = dstBase + (i * kw + j) * cin;
            for (let ci = 0; ci < cin; ci++) cols[dst + ci] = xd[src + ci];
          }
        }
      }
    }
  }
  const colsMat = tf.tensor2d(cols, [n, k]);
  const dyMat = tf.reshape(dy, [n, cout]);
  return tf.reshape(tf.matMul(colsMat, dyMat, true, false), [kh, kw, cin, cout]);
}

export function registerFastConv2dGradient(): void {
  if (registered) return;
  registered = true;
  tf.unregisterGradient('Conv2D');
  tf.registerGradient({
    kernelName: 'Conv2D',
    inputsToSave: ['x', 'filter'],
    gradFunc: (dy, saved, attrs) => {
      const [x, filter] = saved as [tf.Tensor4D, tf.Tensor4D];
      const { strides, pad, dataFormat, dilations } = attrs as unknown as {
        strides: number | [number, number];
        pad: string | number;
        dataFormat: string;
        dilations: number | [number, number];
      };
      const stride = Array.isArray(strides) ? strides : [strides, strides];
      const dilation = Array.isArray(dilations) ? dilations : [dilations, dilations];
      if (stride[0] !== 1 || stride[1] !== 1 || dilation[0] !== 1 || dilation[1] !== 1
          || pad !== 'same' || dataFormat !== 'NHWC') {
        throw new Error('fast Conv2D gradient supports only stride-1 dilation-1 NHWC same-pad');
      }
      return {
        x: () => tf.conv2dTranspose(dy as tf.Tensor4D, filter, x.shape, 1, 'same'),
        filter: () => filterGradViaMatmul(x, dy as tf.Tensor4D, filter.shape),
      };
    },
  });
}
