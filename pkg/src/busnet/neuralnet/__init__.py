from busnet.neuralnet.model import (
    FAMILIES,
    HEAD_PREFIX,
    ForwardCache,
    ModelSpec,
    Parameters,
    Prediction,
    backward,
    build,
    cross_entropy,
    forward,
    images_to_batch,
    layer_shapes,
    predict,
    predict_proba,
)

__all__ = [
    "FAMILIES",
    "HEAD_PREFIX",
    "ForwardCache",
    "ModelSpec",
    "Parameters",
    "Prediction",
    "backward",
    "build",
    "cross_entropy",
    "forward",
    "images_to_batch",
    "layer_shapes",
    "predict",
    "predict_proba",
]
