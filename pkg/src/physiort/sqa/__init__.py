"""Signal-quality assessment: the from-scratch 1D-CNN encoder-decoder,
its trainer, the model file format, and whole-recording annotation."""

from .model import (INPUT_FS, INPUT_LEN, LABEL_BAD, LABEL_GOOD, N_BINS,
                    QualityVector, SqaModel, backward, build_model, forward,
                    forward_batch, init_model, loss, znorm)
from .nn import AdamState, ShapeViolation, adam_step, cross_entropy
from .train import EmptyCorpus, evaluate, split_by_group, train
from .io import ModelFileError, load_model, save_model
from .stream import StreamQuality, infer_stream

__all__ = [
    "INPUT_FS", "INPUT_LEN", "LABEL_BAD", "LABEL_GOOD", "N_BINS",
    "QualityVector", "SqaModel", "backward", "build_model", "forward",
    "forward_batch", "init_model", "loss", "znorm",
    "AdamState", "ShapeViolation", "adam_step", "cross_entropy",
    "EmptyCorpus", "evaluate", "split_by_group", "train",
    "ModelFileError", "load_model", "save_model",
    "StreamQuality", "infer_stream",
]
