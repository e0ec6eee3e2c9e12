import * as tf from '@tensorflow/tfjs';
import { mkdir, readFile, writeFile } from 'node:fs/promises';
import { join } from 'node:path';

// The pure-JS tfjs build ships no filesystem IO handlers (those live in
// tfjs-node), so the standard layers-model layout, model.json next to a
// single weights.bin, is written and parsed by hand here.

interface WeightsGroup {
  paths: string[];
  weights: tf.io.WeightsManifestEntry[];
}

export async function saveLayersModel(model: tf.LayersModel, dir: string): Promise<void> {
  await mkdir(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = tf.io.CompositeArrayBuffer.join(artifacts.weightData);
      const modelJson = {
        format: 'layers-model',
        generatedBy: 'magdiff-exporter fixture',
        convertedBy: null,
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      };
      await writeFile(join(dir, 'model.json'), JSON.stringify(modelJson));
      await writeFile(join(dir, 'weights.bin'), Buffer.from(weightData));
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
    }),
  );
}

export async function loadLayersModel(dir: string): Promise<tf.LayersModel> {
  const modelPath = join(dir, 'model.json');
  const modelJson = JSON.parse(await readFile(modelPath, 'utf8'));
  const groups: WeightsGroup[] = modelJson.weightsManifest ?? [];
  const paths = groups.flatMap((group) => group.paths);
  const specs = groups.flatMap((group) => group.weights);
  const buffers = await Promise.all(paths.map((p) => readFile(join(dir, p))));
  const total = buffers.reduce((sum, buf) => sum + buf.length, 0);
  const joined = new Uint8Array(total);
  let offset = 0;
  for (const buf of buffers) {
    joined.set(buf, offset);
    offset += buf.length;
  }
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: modelJson.modelTopology,
      weightSpecs: specs,
      weightData: joined.buffer,
    }),
  );
}
