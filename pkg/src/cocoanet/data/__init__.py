"""Dataset scanning, splitting, normalization and augmentation."""
from .dataset import ArrayDataset, ManifestDataset, batch_indices, load_batch
from .labels import decode_label, encode_label, one_hot
from .manifest import (SPLITS, DatasetLayoutError, DatasetManifest, Entry, format_split_table,
                       scan_dataset, split_sizes, stratified_split)
from .transforms import (AugmentationPolicy, NormalizationStats, augment_train,
                         compute_channel_means, load_rgb, preprocess_eval, resize_bilinear,
                         resize_shorter, sample_augmentation)

__all__ = [
    "ArrayDataset", "ManifestDataset", "batch_indices", "load_batch", "decode_label",
    "encode_label", "one_hot", "SPLITS", "DatasetLayoutError", "DatasetManifest", "Entry",
    "format_split_table", "scan_dataset", "split_sizes", "stratified_split", "AugmentationPolicy",
    "NormalizationStats", "augment_train", "compute_channel_means", "load_rgb", "preprocess_eval",
    "resize_bilinear", "resize_shorter", "sample_augmentation",
]
