import { readFile, writeFile } from 'node:fs/promises';

// big-endian magics from the classic MNIST layout
export const IMAGES_MAGIC = 0x00000803;
export const LABELS_MAGIC = 0x00000801;

export interface IdxImages {
  count: number;
  rows: number;
  cols: number;
  pixels: Uint8Array;
}

export async function readIdxImages(path: string): Promise<IdxImages> {
  const raw = await readFile(path);
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  if (raw.length < 16 || view.getUint32(0) !== IMAGES_MAGIC) {
    throw new Error(`${path} is not an images idx file`);
  }
  const count = view.getUint32(4);
  const rows = view.getUint32(8);
  const cols = view.getUint32(12);
  const expected = 16 + count * rows * cols;
  if (raw.length !== expected) {
    throw new Error(`${path}: expected ${expected} bytes, got ${raw.length}`);
  }
  return {
    count,
    rows,
    cols,
    pixels: new Uint8Array(raw.buffer, raw.byteOffset + 16, count * rows * cols),
  };
}

export async function readIdxLabels(path: string): Promise<Uint8Array> {
  const raw = await readFile(path);
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  if (raw.length < 8 || view.getUint32(0) !== LABELS_MAGIC) {
    throw new Error(`${path} is not a labels idx file`);
  }
  const count = view.getUint32(4);
  if (raw.length !== 8 + count) {
    throw new Error(`${path}: expected ${8 + count} bytes, got ${raw.length}`);
  }
  return new Uint8Array(raw.buffer, raw.byteOffset + 8, count);
}

export async function writeIdxImages(path: string, images: IdxImages): Promise<void> {
  const { count, rows, cols, pixels } = images;
  if (pixels.length !== count * rows * cols) {
    throw new Error(`pixel buffer holds ${pixels.length} bytes, header says ${count * rows * cols}`);
  }
  const out = new Uint8Array(16 + pixels.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, IMAGES_MAGIC);
  view.setUint32(4, count);
  view.setUint32(8, rows);
  view.setUint32(12, cols);
  out.set(pixels, 16);
  await writeFile(path, out);
}

export async function writeIdxLabels(path: string, labels: Uint8Array): Promise<void> {
  const out = new Uint8Array(8 + labels.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, LABELS_MAGIC);
  view.setUint32(4, labels.length);
  out.set(labels, 8);
  await writeFile(path, out);
}
