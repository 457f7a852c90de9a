from .formats import (FormatError, decode_features, decode_labels, encode_features,
                      encode_labels, read_features, read_labels, write_features, write_labels)
from .generator import (Sample, ScenarioConfig, all_labelsets, generate_dataset, generate_sample,
                        markov_track, nearest_prototype_decode, prototypes, sample_seed)
from .splits import build_splits, load_manifest, load_split, write_dataset

__all__ = [
    "FormatError", "Sample", "ScenarioConfig", "all_labelsets", "build_splits", "decode_features",
    "decode_labels", "encode_features", "encode_labels", "generate_dataset", "generate_sample",
    "load_manifest", "load_split", "markov_track", "nearest_prototype_decode", "prototypes",
    "read_features", "read_labels", "sample_seed", "write_dataset", "write_features", "write_labels",
]
