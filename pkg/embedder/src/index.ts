export { Catalog, CatalogEntry, CatalogError, labelMatrix, parseCatalog } from "./catalog.js";
export { EmbeddingFile, EmbxError, readEmbx, sampleCount, writeEmbx } from "./embx.js";
export {
  ClipEncoder,
  DEFAULT_CLIP_MODEL,
  EMBEDDING_DIM,
  Encoder,
  EncoderUnavailableError,
  StubEncoder,
  TEXT_TOKEN_LIMIT,
  makeEncoder,
} from "./encoders.js";
export { EmbedRunMetadata, EmbedRunResult, embedCatalog, runMetadata } from "./pipeline.js";
