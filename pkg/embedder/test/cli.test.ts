import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { readEmbx } from "../src/embx.js";
import { pngBytes } from "./png.js";

const CLI = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "dist", "cli.js");

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "embed-cli-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function writeFixture(count = 5, missingImageForId?: number): string {
  const lines: string[] = [];
  for (let i = 0; i < count; i++) {
    const imageName = `img${i}.png`;
    if (i !== missingImageForId) {
      fs.writeFileSync(path.join(dir, imageName), pngBytes(2, 2, [i * 20, 0, 255 - i * 20]));
    }
    lines.push(`${i}\t${imageName}\tcaption number ${i}\t${i % 3}`);
  }
  const catalogPath = path.join(dir, "catalog.tsv");
  fs.writeFileSync(catalogPath, lines.join("\n") + "\n");
  return catalogPath;
}

function runCli(...args: string[]) {
  return spawnSync("node", [CLI, ...args], { encoding: "utf8" });
}

describe("embed CLI", () => {
  it("writes an EMBX file and a metadata sidecar", () => {
    const catalog = writeFixture();
    const proc = runCli("embed", "--catalog", catalog, "--backend", "stub",
                        "--out", path.join(dir, "sample"));
    expect(proc.status).toBe(0);

    const data = readEmbx(path.join(dir, "sample.embx"));
    expect(data.modalityDims).toEqual([512, 512]);
    expect(data.ids.length).toBe(5);
    expect(data.categoryCount).toBe(3);

    const meta = JSON.parse(fs.readFileSync(path.join(dir, "sample.meta.json"), "utf8"));
    expect(meta.model).toBe("deterministic-stub-v1");
    expect(meta.weight_hash).toMatch(/^[0-9a-f]{64}$/);
    expect(meta.embedding_dim).toBe(512);
    expect(meta.samples).toBe(5);
    expect(meta.failed_image_ids).toEqual([]);
    expect(meta.truncated_text_count).toBe(0);
  });

  it("is deterministic run to run", () => {
    const catalog = writeFixture();
    expect(runCli("embed", "--catalog", catalog, "--backend", "stub",
                  "--out", path.join(dir, "a")).status).toBe(0);
    expect(runCli("embed", "--catalog", catalog, "--backend", "stub",
                  "--out", path.join(dir, "b")).status).toBe(0);
    const a = fs.readFileSync(path.join(dir, "a.embx"));
    const b = fs.readFileSync(path.join(dir, "b.embx"));
    expect(a.equals(b)).toBe(true);
  });

  it("skips unreadable images, lists them, and keeps going", () => {
    const catalog = writeFixture(5, 2);
    const proc = runCli("embed", "--catalog", catalog, "--backend", "stub",
                        "--out", path.join(dir, "partial"));
    expect(proc.status).toBe(0);
    expect(proc.stdout).toContain("missing ids: 2");

    const data = readEmbx(path.join(dir, "partial.embx"));
    expect(Array.from(data.ids).map(Number)).toEqual([0, 1, 3, 4]);
    const meta = JSON.parse(fs.readFileSync(path.join(dir, "partial.meta.json"), "utf8"));
    expect(meta.failed_image_ids).toEqual(["2"]);
  });

  it("rejects missing arguments with exit code 2", () => {
    expect(runCli("embed", "--catalog", "x.tsv").status).toBe(2);
    expect(runCli("nonsense").status).toBe(2);
    expect(runCli("embed", "--catalog", "x.tsv", "--out", "y", "--batch", "0").status).toBe(2);
  });

  it("reports a missing catalog as a data error (exit 3)", () => {
    const proc = runCli("embed", "--catalog", path.join(dir, "absent.tsv"),
                        "--backend", "stub", "--out", path.join(dir, "z"));
    expect(proc.status).toBe(3);
  });

  it("respects an explicit category count", () => {
    const catalog = writeFixture();
    expect(runCli("embed", "--catalog", catalog, "--backend", "stub",
                  "--categories", "24", "--out", path.join(dir, "wide")).status).toBe(0);
    expect(readEmbx(path.join(dir, "wide.embx")).categoryCount).toBe(24);
  });
});
