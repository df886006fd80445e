/**
 * EMBX embedding-file writer/reader.
 *
 * Byte layout (little-endian), shared with the retrieval toolkit that
 * consumes these files:
 *
 *   magic "EMBX" | version u32 = 1 | sample_count u64 | modality_count u32
 *   | dim u32 per modality | category_count u32
 *   | features f32 (modality-major, row-major)
 *   | labels (sample_count * category_count bytes, 0/1)
 *   | ids u64
 */

import * as fs from "node:fs";

export const EMBX_MAGIC = "EMBX";
export const EMBX_VERSION = 1;

export class EmbxError extends Error {}

export interface EmbeddingFile {
  /** One Float32Array per modality, row-major, length = count * dim. */
  features: Float32Array[];
  modalityDims: number[];
  /** Multi-hot byte matrix, length = count * categoryCount. */
  labels: Uint8Array;
  categoryCount: number;
  ids: BigUint64Array;
}

export function sampleCount(data: EmbeddingFile): number {
  return data.ids.length;
}

function validate(data: EmbeddingFile): void {
  const count = data.ids.length;
  if (data.features.length !== data.modalityDims.length || data.features.length === 0) {
    throw new EmbxError("need at least one modality with a matching dim entry");
  }
  data.modalityDims.forEach((dim, m) => {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new EmbxError(`modality ${m}: dim must be a positive integer`);
    }
    if (data.features[m].length !== count * dim) {
      throw new EmbxError(
        `modality ${m}: ${data.features[m].length} values, expected ${count * dim}`,
      );
    }
    for (const v of data.features[m]) {
      if (!Number.isFinite(v)) throw new EmbxError(`modality ${m}: non-finite value`);
    }
  });
  if (data.labels.length !== count * data.categoryCount) {
    throw new EmbxError(
      `label payload has ${data.labels.length} bytes, expected ${count * data.categoryCount}`,
    );
  }
  for (const v of data.labels) {
    if (v !== 0 && v !== 1) throw new EmbxError("labels must be 0/1");
  }
  if (data.categoryCount > 0) {
    for (let i = 0; i < count; i++) {
      let any = 0;
      for (let c = 0; c < data.categoryCount; c++) any |= data.labels[i * data.categoryCount + c];
      if (!any) throw new EmbxError(`sample id ${data.ids[i]} has no label bit set`);
    }
  }
  if (new Set(data.ids).size !== count) throw new EmbxError("sample ids must be unique");
}

export function writeEmbx(path: string, data: EmbeddingFile): void {
  validate(data);
  const count = data.ids.length;
  const modalities = data.modalityDims.length;
  const featureBytes = data.modalityDims.reduce((acc, d) => acc + 4 * count * d, 0);
  const total =
    4 + 4 + 8 + 4 + 4 * modalities + 4 + featureBytes + data.labels.length + 8 * count;

  const buf = Buffer.alloc(total);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  let off = buf.write(EMBX_MAGIC, 0, "ascii");
  view.setUint32(off, EMBX_VERSION, true);
  off += 4;
  view.setBigUint64(off, BigInt(count), true);
  off += 8;
  view.setUint32(off, modalities, true);
  off += 4;
  for (const dim of data.modalityDims) {
    view.setUint32(off, dim, true);
    off += 4;
  }
  view.setUint32(off, data.categoryCount, true);
  off += 4;
  for (const feat of data.features) {
    for (const v of feat) {
      view.setFloat32(off, v, true);
      off += 4;
    }
  }
  buf.set(data.labels, off);
  off += data.labels.length;
  for (const id of data.ids) {
    view.setBigUint64(off, id, true);
    off += 8;
  }
  fs.writeFileSync(path, buf);
}

export function readEmbx(path: string): EmbeddingFile {
  const buf = fs.readFileSync(path);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const need = (offset: number, size: number, what: string) => {
    if (offset + size > buf.length) {
      throw new EmbxError(`${path}: file ends inside ${what}`);
    }
  };

  need(0, 4, "magic");
  if (buf.toString("ascii", 0, 4) !== EMBX_MAGIC) {
    throw new EmbxError(`${path}: bad magic`);
  }
  need(4, 16, "header");
  const version = view.getUint32(4, true);
  if (version !== EMBX_VERSION) throw new EmbxError(`${path}: unsupported version ${version}`);
  const count = Number(view.getBigUint64(8, true));
  const modalities = view.getUint32(16, true);
  let off = 20;
  need(off, 4 * modalities + 4, "modality dims");
  const modalityDims: number[] = [];
  for (let m = 0; m < modalities; m++) {
    modalityDims.push(view.getUint32(off, true));
    off += 4;
  }
  const categoryCount = view.getUint32(off, true);
  off += 4;

  const features: Float32Array[] = [];
  for (const dim of modalityDims) {
    need(off, 4 * count * dim, "feature payload");
    const feat = new Float32Array(count * dim);
    for (let i = 0; i < feat.length; i++) {
      feat[i] = view.getFloat32(off, true);
      off += 4;
    }
    features.push(feat);
  }
  need(off, count * categoryCount, "label payload");
  const labels = new Uint8Array(buf.subarray(off, off + count * categoryCount));
  off += count * categoryCount;
  need(off, 8 * count, "id payload");
  const ids = new BigUint64Array(count);
  for (let i = 0; i < count; i++) {
    ids[i] = view.getBigUint64(off, true);
    off += 8;
  }
  if (off !== buf.length) throw new EmbxError(`${path}: trailing bytes after payload`);

  const data: EmbeddingFile = { features, modalityDims, labels, categoryCount, ids };
  validate(data);
  return data;
}
