"""Gated multi-modal fusion hashing and Hamming-distance retrieval."""

__version__ = "0.1.0"

from .data import (
    DatasetSplit,
    EmbeddingSet,
    concat_modalities,
    generate_synthetic,
    load_split,
    make_embedding_set,
    read_embedding_file,
    stack_concat,
    write_embedding_file,
    write_split_manifest,
)
from .evaluation import (
    EvalResult,
    average_precision,
    mean_average_precision,
    relevance,
)
from .index import (
    BinaryCodeMatrix,
    SearchResult,
    hamming_distance,
    pack_codes,
    rank_all,
    read_code_file,
    search_topk,
    unpack_codes,
    write_code_file,
)
from .model import (
    Checkpoint,
    ForwardTrace,
    GatingParams,
    HashParams,
    LossHeadParams,
    ModelParams,
    binarize,
    gate_forward,
    hash_forward,
    init_params,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
    sigmoid,
)
from .training import (
    LossTerms,
    TrainConfig,
    TrainResult,
    compute_loss,
    finite_diff_check,
    optimizer_step,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
