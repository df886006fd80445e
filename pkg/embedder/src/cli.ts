#!/usr/bin/env node
/**
 * `gatehash-embed embed --catalog <tsv> --out <prefix>`
 *
 * Reads a sample catalog, embeds images and texts into 512-D vectors, and
 * writes `<prefix>.embx` (consumed by the retrieval toolkit) plus a
 * `<prefix>.meta.json` sidecar recording the model variant, weight hash,
 * failed image ids, and text-truncation count.
 *
 * Exit codes: 0 success, 2 argument error, 3 data/model error.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import { CatalogError, parseCatalog } from "./catalog.js";
import { EmbxError, writeEmbx } from "./embx.js";
import { DEFAULT_CLIP_MODEL, EncoderUnavailableError, makeEncoder } from "./encoders.js";
import { embedCatalog, runMetadata } from "./pipeline.js";

const USAGE = `usage: gatehash-embed embed --catalog <tsv> --out <prefix>
                       [--backend clip|stub] [--model <name>]
                       [--batch <n>] [--categories <n>]`;

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== "embed") {
    process.stderr.write(`error: unknown command ${JSON.stringify(argv[0] ?? "")}\n${USAGE}\n`);
    return 2;
  }
  let values;
  try {
    values = parseArgs({
      args: argv.slice(1),
      options: {
        catalog: { type: "string" },
        out: { type: "string" },
        backend: { type: "string", default: "clip" },
        model: { type: "string", default: DEFAULT_CLIP_MODEL },
        batch: { type: "string", default: "16" },
        categories: { type: "string" },
      },
    }).values;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n${USAGE}\n`);
    return 2;
  }
  if (!values.catalog || !values.out) {
    process.stderr.write(`error: --catalog and --out are required\n${USAGE}\n`);
    return 2;
  }
  const batch = Number(values.batch);
  if (!Number.isInteger(batch) || batch < 1) {
    process.stderr.write("error: --batch must be a positive integer\n");
    return 2;
  }
  let categories: number | undefined;
  if (values.categories !== undefined) {
    categories = Number(values.categories);
    if (!Number.isInteger(categories) || categories < 1) {
      process.stderr.write("error: --categories must be a positive integer\n");
      return 2;
    }
  }

  try {
    const tsvText = fs.readFileSync(values.catalog, "utf8");
    const catalog = parseCatalog(tsvText, path.dirname(path.resolve(values.catalog)), categories);
    const encoder = makeEncoder(values.backend!, values.model);
    const result = await embedCatalog(catalog, encoder, batch);

    const embxPath = `${values.out}.embx`;
    const metaPath = `${values.out}.meta.json`;
    fs.mkdirSync(path.dirname(path.resolve(embxPath)), { recursive: true });
    writeEmbx(embxPath, result.data);
    const metadata = await runMetadata(encoder, result);
    fs.writeFileSync(metaPath, JSON.stringify(metadata, null, 2) + "\n");

    process.stdout.write(
      `embedded ${metadata.samples} samples (${metadata.failed_image_ids.length} image ` +
        `failures, ${metadata.truncated_text_count} truncated texts) -> ${embxPath}\n`,
    );
    if (metadata.failed_image_ids.length) {
      process.stdout.write(`missing ids: ${metadata.failed_image_ids.join(", ")}\n`);
    }
    return 0;
  } catch (err) {
    if (
      err instanceof CatalogError ||
      err instanceof EmbxError ||
      err instanceof EncoderUnavailableError ||
      (err as NodeJS.ErrnoException).code === "ENOENT"
    ) {
      process.stderr.write(`error: ${(err as Error).message}\n`);
      return 3;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
