#!/usr/bin/env node
import { exportFeatures } from './export_features.js';
import { exportModel } from './export_model.js';

const USAGE = `usage:
  cli.js export-model <model-dir> <out-dir>
  cli.js export-features <model-dir> <images-idx> <labels-idx> <out-dir> [--layer N]

export-model writes manifest.json, one f32 blob per dense layer, and 16
shared test vectors. export-features taps one layer (default -2, the
penultimate) and dumps its outputs as a (count, dim) float blob with the
labels alongside.`;

function fail(message: string): never {
  console.error(message);
  process.exit(1);
}

async function main(argv: string[]): Promise<void> {
  const [command, ...rest] = argv;
  if (command === 'export-model') {
    if (rest.length !== 2) fail(USAGE);
    const manifest = await exportModel(rest[0], rest[1]);
    console.log(`wrote ${manifest}`);
    return;
  }
  if (command === 'export-features') {
    let tap = -2;
    const positional: string[] = [];
    for (let i = 0; i < rest.length; i++) {
      if (rest[i] === '--layer') {
        const value = rest[++i];
        if (value === undefined || !/^-?\d+$/.test(value)) fail('--layer needs an integer');
        tap = parseInt(value, 10);
      } else {
        positional.push(rest[i]);
      }
    }
    if (positional.length !== 4) fail(USAGE);
    const dump = await exportFeatures(positional[0], positional[1], positional[2], tap, positional[3]);
    console.log(`wrote ${dump.count}x${dump.dim} features to ${dump.featuresPath}`);
    return;
  }
  fail(USAGE);
}

main(process.argv.slice(2)).catch((err) => {
  fail(`error: ${err instanceof Error ? err.message : err}`);
});
