from .images import LAYOUT_RULES, encode_jpeg, ingest, jpeg_corpus, load_array, load_images, load_rgb
from .manifest import CLASSES, Binary, ClassLabel, GenBenchSpec, ImageRecord, Manifest, Split
from .protocols import (
    assemble_generalization_set,
    balance_eval_set,
    carve_validation,
    equal_division,
    largest_remainder,
    make_unbalanced_subset,
    others_quota,
    split_three_way,
)

__all__ = [
    "CLASSES",
    "LAYOUT_RULES",
    "Binary",
    "ClassLabel",
    "GenBenchSpec",
    "ImageRecord",
    "Manifest",
    "Split",
    "assemble_generalization_set",
    "balance_eval_set",
    "carve_validation",
    "encode_jpeg",
    "equal_division",
    "ingest",
    "jpeg_corpus",
    "largest_remainder",
    "load_array",
    "load_images",
    "load_rgb",
    "make_unbalanced_subset",
    "others_quota",
    "split_three_way",
]
