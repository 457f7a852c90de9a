from .checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .losses import segmentation_loss
from .model import SegDiffModel, binarize, merge_branches, timestep_embedding
from .training import Adam, TrainingError, evaluate_model, fit, predict, train_step

__all__ = [
    "MAGIC", "decode_checkpoint", "encode_checkpoint", "load_checkpoint", "save_checkpoint",
    "segmentation_loss", "SegDiffModel", "binarize", "merge_branches", "timestep_embedding",
    "Adam", "TrainingError", "evaluate_model", "fit", "predict", "train_step",
]
