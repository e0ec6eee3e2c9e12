import * as tf from '@tensorflow/tfjs';
import { mkdir, writeFile } from 'node:fs/promises';
import { join } from 'node:path';
import { loadLayersModel } from './model_io.js';
import { mulberry32 } from './rng.js';

export const TEST_VECTOR_COUNT = 16;
export const TEST_VECTOR_SEED = 0x6d616764;

// tfjs activation identifiers and their manifest spellings
const ACTIVATION_MAP: Record<string, string> = {
  relu: 'relu',
  sigmoid: 'sigmoid',
  softmax: 'softmax',
  linear: 'identity',
};

// weightless layers that may sit in the head without affecting the
// flattened math
const PASSTHROUGH_CLASSES = new Set(['InputLayer', 'Flatten', 'Dropout']);

export function collectDenseLayers(model: tf.LayersModel): tf.layers.Layer[] {
  const dense: tf.layers.Layer[] = [];
  for (const layer of model.layers) {
    const className = layer.getClassName();
    if (className === 'Dense') {
      dense.push(layer);
    } else if (!PASSTHROUGH_CLASSES.has(className)) {
      throw new Error(
        `unsupported layer "${layer.name}" (${className}) in the dense head; ` +
          `dump features from below it instead`,
      );
    }
  }
  if (dense.length === 0) {
    throw new Error('model has no dense layers to export');
  }
  return dense;
}

interface LayerDescriptor {
  name: string;
  n_in: number;
  n_out: number;
  activation: string;
  weight_file: string;
  bias_file: string;
}

function denseActivation(layer: tf.layers.Layer): string {
  const config = layer.getConfig() as { activation?: string };
  const raw = config.activation ?? 'linear';
  const mapped = ACTIVATION_MAP[raw];
  if (mapped === undefined) {
    throw new Error(`layer "${layer.name}" uses activation "${raw}" which the manifest format cannot express`);
  }
  return mapped;
}

function float32Bytes(values: Float32Array): Buffer {
  const out = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    out.writeFloatLE(values[i], i * 4);
  }
  return out;
}

export async function exportLoadedModel(model: tf.LayersModel, outDir: string): Promise<string> {
  const dense = collectDenseLayers(model);
  await mkdir(outDir, { recursive: true });

  const descriptors: LayerDescriptor[] = [];
  for (let k = 0; k < dense.length; k++) {
    const layer = dense[k];
    const weights = layer.getWeights();
    const kernel = weights[0];
    const [nIn, nOut] = kernel.shape as [number, number];
    // manifest blobs hold (n_out, n_in) row-major, tfjs kernels are the
    // transpose of that
    const transposed = tf.transpose(kernel);
    const kernelData = (await transposed.data()) as Float32Array;
    transposed.dispose();
    const biasData =
      weights.length > 1 ? ((await weights[1].data()) as Float32Array) : new Float32Array(nOut);

    const name = `layer_${k}`;
    const descriptor: LayerDescriptor = {
      name,
      n_in: nIn,
      n_out: nOut,
      activation: denseActivation(layer),
      weight_file: `${name}.weight.f32`,
      bias_file: `${name}.bias.f32`,
    };
    await writeFile(join(outDir, descriptor.weight_file), float32Bytes(kernelData));
    await writeFile(join(outDir, descriptor.bias_file), float32Bytes(biasData));
    descriptors.push(descriptor);
  }

  const manifest = {
    format_version: 1,
    class_count: descriptors[descriptors.length - 1].n_out,
    layers: descriptors,
    metadata: { source: 'tfjs', dense_layers: descriptors.length },
  };
  const manifestPath = join(outDir, 'manifest.json');
  await writeFile(manifestPath, JSON.stringify(manifest, null, 2) + '\n');

  await writeTestVectors(dense, join(outDir, 'test_vectors.json'));
  return manifestPath;
}

async function writeTestVectors(dense: tf.layers.Layer[], path: string): Promise<void> {
  const inputDim = (dense[0].getWeights()[0].shape as [number, number])[0];
  const rand = mulberry32(TEST_VECTOR_SEED);
  const raw = Float32Array.from({ length: TEST_VECTOR_COUNT * inputDim }, () => rand());

  const inputs = tf.tensor2d(raw, [TEST_VECTOR_COUNT, inputDim]);
  let cursor: tf.Tensor = inputs;
  for (const layer of dense) {
    cursor = layer.apply(cursor) as tf.Tensor;
  }
  const outputDim = cursor.shape[1] as number;
  const outputs = (await cursor.data()) as Float32Array;

  const vectors = [];
  for (let i = 0; i < TEST_VECTOR_COUNT; i++) {
    vectors.push({
      input: Array.from(raw.subarray(i * inputDim, (i + 1) * inputDim)),
      output: Array.from(outputs.subarray(i * outputDim, (i + 1) * outputDim)),
    });
  }
  const doc = {
    format_version: 1,
    count: TEST_VECTOR_COUNT,
    input_dim: inputDim,
    output_dim: outputDim,
    vectors,
  };
  await writeFile(path, JSON.stringify(doc, null, 2) + '\n');
}

export async function exportModel(modelDir: string, outDir: string): Promise<string> {
  const model = await loadLayersModel(modelDir);
  return exportLoadedModel(model, outDir);
}
