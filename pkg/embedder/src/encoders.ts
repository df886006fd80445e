/**
 * Embedding backends.
 *
 * `ClipEncoder` runs a pretrained contrastive vision-language model with a
 * 512-dimensional joint embedding space (the variant actually used is
 * recorded in the output metadata). It needs `@xenova/transformers` plus
 * locally available weights.
 *
 * `StubEncoder` is a deterministic offline stand-in: vectors are expanded
 * from a SHA-256 of the input bytes/text. It exercises every contract of
 * the pipeline (dims, determinism, truncation accounting, file plumbing)
 * without model weights, and is what the tests use. It carries no
 * semantics; do not use its output to measure retrieval quality.
 */

import { createHash } from "node:crypto";

export const EMBEDDING_DIM = 512;

/** Token budget mirroring the contrastive model's text context window. */
export const TEXT_TOKEN_LIMIT = 77;

export class EncoderUnavailableError extends Error {}

export interface TextEmbedding {
  vector: Float32Array;
  truncated: boolean;
}

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  weightHash(): Promise<string | null>;
  embedImage(bytes: Buffer): Promise<Float32Array>;
  embedText(text: string): Promise<TextEmbedding>;
}

/** Expand a seed digest into `dim` float32 values in [-1, 1). */
function expandToVector(seed: Buffer, dim: number): Float32Array {
  const out = new Float32Array(dim);
  let produced = 0;
  for (let block = 0; produced < dim; block++) {
    const counter = Buffer.alloc(4);
    counter.writeUInt32LE(block);
    const bytes = createHash("sha256").update(seed).update(counter).digest();
    for (let i = 0; i + 4 <= bytes.length && produced < dim; i += 4) {
      const u = bytes.readUInt32LE(i);
      out[produced++] = (u / 2 ** 32) * 2 - 1;
    }
  }
  return out;
}

export class StubEncoder implements Encoder {
  readonly name = "deterministic-stub-v1";
  readonly dim = EMBEDDING_DIM;

  async weightHash(): Promise<string> {
    return createHash("sha256").update(this.name).digest("hex");
  }

  async embedImage(bytes: Buffer): Promise<Float32Array> {
    const seed = createHash("sha256").update("image:").update(bytes).digest();
    return expandToVector(seed, this.dim);
  }

  async embedText(text: string): Promise<TextEmbedding> {
    const tokens = text.normalize("NFC").split(/\s+/u).filter((t) => t.length > 0);
    const truncated = tokens.length > TEXT_TOKEN_LIMIT;
    const kept = tokens.slice(0, TEXT_TOKEN_LIMIT).join(" ");
    const seed = createHash("sha256").update("text:").update(kept, "utf8").digest();
    return { vector: expandToVector(seed, this.dim), truncated };
  }
}

export const DEFAULT_CLIP_MODEL = "Xenova/clip-vit-base-patch32";

export class ClipEncoder implements Encoder {
  readonly dim = EMBEDDING_DIM;
  readonly name: string;
  private lib: any = null;
  private tokenizer: any = null;
  private textModel: any = null;
  private processor: any = null;
  private visionModel: any = null;

  constructor(model: string = DEFAULT_CLIP_MODEL) {
    this.name = model;
  }

  private async load(): Promise<void> {
    if (this.lib) return;
    try {
      // resolved at runtime only; the package is an optional install
      const specifier = "@xenova/transformers";
      this.lib = await import(specifier);
    } catch {
      throw new EncoderUnavailableError(
        "backend 'clip' needs the @xenova/transformers package " +
          "(npm install @xenova/transformers) plus locally cached model weights; " +
          "use --backend stub for offline plumbing runs",
      );
    }
    const { AutoTokenizer, AutoProcessor, CLIPTextModelWithProjection,
            CLIPVisionModelWithProjection } = this.lib;
    try {
      this.tokenizer = await AutoTokenizer.from_pretrained(this.name);
      this.textModel = await CLIPTextModelWithProjection.from_pretrained(this.name);
      this.processor = await AutoProcessor.from_pretrained(this.name);
      this.visionModel = await CLIPVisionModelWithProjection.from_pretrained(this.name);
    } catch (err) {
      throw new EncoderUnavailableError(
        `could not load model ${this.name}: ${(err as Error).message}`,
      );
    }
  }

  async weightHash(): Promise<string | null> {
    // weights live in the transformers cache as opaque shards; reproduce the
    // variant via its name and revisionless cache key instead of a file hash
    return null;
  }

  async embedImage(bytes: Buffer): Promise<Float32Array> {
    await this.load();
    const image = await this.lib.RawImage.fromBlob(new Blob([bytes]));
    const inputs = await this.processor(image);
    const { image_embeds } = await this.visionModel(inputs);
    const vector = Float32Array.from(image_embeds.data.slice(0, this.dim));
    if (vector.length !== this.dim) {
      throw new EncoderUnavailableError(
        `model ${this.name} produced ${vector.length}-D image embeddings, expected ${this.dim}`,
      );
    }
    return vector;
  }

  async embedText(text: string): Promise<TextEmbedding> {
    await this.load();
    const probe = this.tokenizer(text);
    const truncated = probe.input_ids.dims[1] > TEXT_TOKEN_LIMIT;
    const inputs = this.tokenizer(text, {
      padding: true,
      truncation: true,
      max_length: TEXT_TOKEN_LIMIT,
    });
    const { text_embeds } = await this.textModel(inputs);
    return {
      vector: Float32Array.from(text_embeds.data.slice(0, this.dim)),
      truncated,
    };
  }
}

export function makeEncoder(backend: string, model?: string): Encoder {
  switch (backend) {
    case "stub":
      return new StubEncoder();
    case "clip":
      return new ClipEncoder(model);
    default:
      throw new EncoderUnavailableError(`unknown backend ${JSON.stringify(backend)}`);
  }
}
