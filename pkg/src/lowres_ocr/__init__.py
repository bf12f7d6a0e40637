"""Recognition of ultra-low-resolution document scans by ensembling
several upscalings of the same page."""

from .calibrate import CalibrationTable, ScoredWord, bin_confidences, score_words
from .ensemble import (
    CmodParams,
    EnsembleConfig,
    Lexicon,
    MethodOutput,
    align_words,
    merge,
    modified_confidence,
    select_master,
    vote,
)
from .metrics import EvalResult, evaluate, evaluate_corpus, levenshtein, normalize_text
from .ocr_io import BBox, PageRec, WordRec, parse_tsv, run_backend, serialize_tsv
from .raster import (
    CANONICAL_METHODS,
    CANONICAL_TAGS,
    Bicubic,
    Bilinear,
    DegradeSpec,
    GrayImage,
    NearestGauss,
    apply_upscale,
    box_downsample,
    degrade,
)

__version__ = "0.1.0"
