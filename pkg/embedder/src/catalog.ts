/**
 * Source catalog parsing.
 *
 * A catalog is a TSV file with one sample per line:
 *
 *   <id> \t <image path> \t <text> \t <comma-separated label indices>
 *
 * Blank lines and lines starting with `#` are skipped. Image paths are
 * resolved relative to the catalog file's directory.
 */

import * as path from "node:path";

export class CatalogError extends Error {}

export interface CatalogEntry {
  id: bigint;
  imagePath: string;
  text: string;
  labels: number[];
}

export interface Catalog {
  entries: CatalogEntry[];
  categoryCount: number;
}

export function parseCatalog(
  tsvText: string,
  baseDir: string,
  categoryCount?: number,
): Catalog {
  const entries: CatalogEntry[] = [];
  const seen = new Set<bigint>();
  let maxLabel = -1;

  const lines = tsvText.split("\n");
  for (let lineNo = 1; lineNo <= lines.length; lineNo++) {
    const line = lines[lineNo - 1].replace(/\r$/, "");
    if (!line.trim() || line.startsWith("#")) continue;
    const fields = line.split("\t");
    if (fields.length !== 4) {
      throw new CatalogError(
        `line ${lineNo}: expected 4 tab-separated fields, found ${fields.length}`,
      );
    }
    const [idText, imageField, text, labelField] = fields;

    if (!/^\d+$/.test(idText.trim())) {
      throw new CatalogError(`line ${lineNo}: id must be a non-negative integer`);
    }
    const id = BigInt(idText.trim());
    if (seen.has(id)) throw new CatalogError(`line ${lineNo}: duplicate id ${id}`);
    seen.add(id);

    if (!imageField.trim()) {
      throw new CatalogError(`line ${lineNo}: empty image path`);
    }
    const labels = labelField.split(",").map((part) => {
      const trimmed = part.trim();
      if (!/^\d+$/.test(trimmed)) {
        throw new CatalogError(`line ${lineNo}: bad label index ${JSON.stringify(part)}`);
      }
      return Number(trimmed);
    });
    if (labels.length === 0) {
      throw new CatalogError(`line ${lineNo}: every sample needs at least one label`);
    }
    maxLabel = Math.max(maxLabel, ...labels);

    entries.push({
      id,
      imagePath: path.resolve(baseDir, imageField.trim()),
      text,
      labels,
    });
  }

  if (entries.length === 0) throw new CatalogError("catalog has no samples");
  const inferred = maxLabel + 1;
  if (categoryCount !== undefined) {
    if (categoryCount < inferred) {
      throw new CatalogError(
        `categories=${categoryCount} but catalog uses label index ${maxLabel}`,
      );
    }
    return { entries, categoryCount };
  }
  return { entries, categoryCount: inferred };
}

/** Multi-hot byte matrix (count * categoryCount) in catalog order. */
export function labelMatrix(catalog: Catalog): Uint8Array {
  const { entries, categoryCount } = catalog;
  const out = new Uint8Array(entries.length * categoryCount);
  entries.forEach((entry, row) => {
    for (const label of entry.labels) out[row * categoryCount + label] = 1;
  });
  return out;
}
