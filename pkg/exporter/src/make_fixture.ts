// Builds a seeded dense model plus a small synthetic dataset, saves the
// model in the standard layers-model layout, then runs both exporters
// against it. Used by the test suites on both sides of the format.
import * as tf from '@tensorflow/tfjs';
import { join, resolve } from 'node:path';
import { pathToFileURL } from 'node:url';
import { exportFeatures } from './export_features.js';
import { exportModel } from './export_model.js';
import { writeIdxImages, writeIdxLabels } from './idx.js';
import { mkdir } from 'node:fs/promises';
import { saveLayersModel } from './model_io.js';
import { mulberry32 } from './rng.js';

export function buildFixtureModel(): tf.LayersModel {
  const rand = mulberry32(2718);
  const model = tf.sequential();
  model.add(tf.layers.dense({ units: 12, activation: 'relu', inputShape: [16] }));
  model.add(tf.layers.dense({ units: 10, activation: 'relu' }));
  model.add(tf.layers.dense({ units: 4, activation: 'softmax' }));
  for (const layer of model.layers) {
    const seeded = layer.getWeights().map((w) => {
      const values = Float32Array.from({ length: w.size }, () => rand() * 2 - 1);
      return tf.tensor(values, w.shape);
    });
    layer.setWeights(seeded);
  }
  return model;
}

export async function makeFixture(root: string): Promise<void> {
  const model = buildFixtureModel();
  const modelDir = join(root, 'model');
  await saveLayersModel(model, modelDir);
  await exportModel(modelDir, join(root, 'export'));

  const rand = mulberry32(99);
  const count = 48;
  const pixels = Uint8Array.from({ length: count * 16 }, () => Math.floor(rand() * 256));
  const labels = Uint8Array.from({ length: count }, (_, i) => i % 4);
  const dataDir = join(root, 'data');
  await mkdir(dataDir, { recursive: true });
  const imagesPath = join(dataDir, 'images.idx');
  const labelsPath = join(dataDir, 'labels.idx');
  await writeIdxImages(imagesPath, { count, rows: 4, cols: 4, pixels });
  await writeIdxLabels(labelsPath, labels);
  await exportFeatures(modelDir, imagesPath, labelsPath, -2, join(root, 'features'));
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  const root = resolve(process.argv[2] ?? '.fixture');
  makeFixture(root)
    .then(() => console.log(`fixture written to ${root}`))
    .catch((err) => {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    });
}
