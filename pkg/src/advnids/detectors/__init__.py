from .autoencoder import MLP, SURROGATE_LAYERS, DenseAutoencoder, fit_surrogate, rmse
from .base import (Detector, EmptyInputError, MeanPlus3Sigma, Normalizer, NotFittedError, Percentile,
                   calibrate_threshold, threshold_from_scores, write_scores_csv)
from .kitnet import KitNetEnsemble, build_feature_map
from .lof import LofModel
from .rrcf import RandomCutTree, RrcfForest
from .serialize import DETECTOR_TYPES, ModelFormatError, load_model, save_model
from .som import SomGrid

TARGET_KINDS = ("kitnet", "som", "lof", "rrcf", "autoencoder")


def make_detector(kind: str, seed: int = 0, **kwargs) -> Detector:
    """Construct an unfitted target detector by name; autoencoder targets use Percentile(0.999)."""
    if kind == "autoencoder":
        kwargs.setdefault("threshold_method", Percentile(0.999))
    return DETECTOR_TYPES[kind](seed=seed, **kwargs)


__all__ = [
    "Detector", "DenseAutoencoder", "EmptyInputError", "KitNetEnsemble", "LofModel", "MLP",
    "MeanPlus3Sigma", "ModelFormatError", "Normalizer", "NotFittedError", "Percentile",
    "RandomCutTree", "RrcfForest", "SURROGATE_LAYERS", "SomGrid", "TARGET_KINDS",
    "build_feature_map", "calibrate_threshold", "fit_surrogate", "load_model", "make_detector",
    "rmse", "save_model", "threshold_from_scores", "write_scores_csv",
]
