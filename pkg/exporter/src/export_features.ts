import * as tf from '@tensorflow/tfjs';
import { mkdir, writeFile } from 'node:fs/promises';
import { join } from 'node:path';
import { readIdxImages, readIdxLabels, writeIdxLabels } from './idx.js';
import { loadLayersModel } from './model_io.js';

export interface FeatureDump {
  count: number;
  dim: number;
  featuresPath: string;
  labelsPath: string;
}

/**
 * Run a dataset through the model up to one tap layer and dump that
 * layer's outputs as a (count, dim) float blob, labels alongside.
 * Negative taps count back from the last layer, so -2 is the
 * penultimate layer.
 */
export async function exportFeatures(
  modelDir: string,
  imagesPath: string,
  labelsPath: string,
  tap: number,
  outDir: string,
): Promise<FeatureDump> {
  const model = await loadLayersModel(modelDir);
  const images = await readIdxImages(imagesPath);
  const labels = await readIdxLabels(labelsPath);
  if (labels.length !== images.count) {
    throw new Error(`${labels.length} labels for ${images.count} images`);
  }

  const index = tap < 0 ? model.layers.length + tap : tap;
  if (index < 0 || index >= model.layers.length) {
    throw new Error(`layer tap ${tap} is out of range for ${model.layers.length} layers`);
  }
  const truncated = tf.model({ inputs: model.inputs, outputs: model.layers[index].output });

  const inputShape = model.inputs[0].shape.slice(1) as number[];
  const flat = inputShape.reduce((a, b) => a * b, 1);
  if (flat !== images.rows * images.cols) {
    throw new Error(`model expects ${flat} input values but images are ${images.rows}x${images.cols}`);
  }
  const scaled = Float32Array.from(images.pixels, (v) => v / 255);
  const batch = tf.tensor(scaled, [images.count, ...inputShape]);
  const out = truncated.predict(batch) as tf.Tensor;
  if (out.shape.length !== 2) {
    throw new Error(`tap layer output has shape [${out.shape}], not a flat vector per sample`);
  }
  const dim = out.shape[1] as number;
  const values = (await out.data()) as Float32Array;

  await mkdir(outDir, { recursive: true });
  const featuresPath = join(outDir, 'features.f32');
  const labelsOut = join(outDir, 'labels.idx');
  await writeFile(featuresPath, featureBlobBytes(images.count, dim, values));
  await writeIdxLabels(labelsOut, labels);
  return { count: images.count, dim, featuresPath, labelsPath: labelsOut };
}

function featureBlobBytes(count: number, dim: number, values: Float32Array): Buffer {
  const out = Buffer.alloc(8 + values.length * 4);
  out.writeUInt32LE(count, 0);
  out.writeUInt32LE(dim, 4);
  for (let i = 0; i < values.length; i++) {
    out.writeFloatLE(values[i], 8 + i * 4);
  }
  return out;
}
