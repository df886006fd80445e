/**
 * Catalog -> embeddings -> EMBX, with per-sample failure accounting.
 *
 * Unreadable images do not abort the run: the sample is dropped from the
 * output and its id is reported. Text is always embeddable (the empty
 * string included); inputs past the encoder's token budget are truncated
 * and counted.
 */

import * as fs from "node:fs";

import { Catalog } from "./catalog.js";
import { EmbeddingFile } from "./embx.js";
import { Encoder } from "./encoders.js";

export interface EmbedRunResult {
  data: EmbeddingFile;
  failedImageIds: bigint[];
  truncatedTextCount: number;
}

export interface EmbedRunMetadata {
  backend_name: string;
  model: string;
  weight_hash: string | null;
  embedding_dim: number;
  samples: number;
  category_count: number;
  failed_image_ids: string[];
  truncated_text_count: number;
}

export async function embedCatalog(
  catalog: Catalog,
  encoder: Encoder,
  batchSize: number = 16,
): Promise<EmbedRunResult> {
  if (batchSize < 1) throw new RangeError("batch size must be positive");
  const failedImageIds: bigint[] = [];
  let truncatedTextCount = 0;

  const kept: { id: bigint; visual: Float32Array; labels: number[]; text: string }[] = [];
  for (let start = 0; start < catalog.entries.length; start += batchSize) {
    const batch = catalog.entries.slice(start, start + batchSize);
    for (const entry of batch) {
      let bytes: Buffer;
      try {
        bytes = fs.readFileSync(entry.imagePath);
      } catch {
        failedImageIds.push(entry.id);
        continue;
      }
      kept.push({
        id: entry.id,
        visual: await encoder.embedImage(bytes),
        labels: entry.labels,
        text: entry.text,
      });
    }
  }

  const count = kept.length;
  const visual = new Float32Array(count * encoder.dim);
  const textual = new Float32Array(count * encoder.dim);
  const labels = new Uint8Array(count * catalog.categoryCount);
  const ids = new BigUint64Array(count);

  for (let row = 0; row < count; row++) {
    const sample = kept[row];
    visual.set(sample.visual, row * encoder.dim);
    const { vector, truncated } = await encoder.embedText(sample.text);
    if (truncated) truncatedTextCount++;
    textual.set(vector, row * encoder.dim);
    for (const label of sample.labels) labels[row * catalog.categoryCount + label] = 1;
    ids[row] = sample.id;
  }

  return {
    data: {
      features: [visual, textual],
      modalityDims: [encoder.dim, encoder.dim],
      labels,
      categoryCount: catalog.categoryCount,
      ids,
    },
    failedImageIds,
    truncatedTextCount,
  };
}

export async function runMetadata(
  encoder: Encoder,
  result: EmbedRunResult,
): Promise<EmbedRunMetadata> {
  return {
    backend_name: encoder.constructor.name,
    model: encoder.name,
    weight_hash: await encoder.weightHash(),
    embedding_dim: encoder.dim,
    samples: result.data.ids.length,
    category_count: result.data.categoryCount,
    failed_image_ids: result.failedImageIds.map((id) => id.toString()),
    truncated_text_count: result.truncatedTextCount,
  };
}
