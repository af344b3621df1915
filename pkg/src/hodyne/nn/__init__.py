"""Self-contained float64 neural-net stack: layers, losses, Adam, model I/O."""

from .adam import AdamState, adam_update, init_adam
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    LayerSpec,
    Linear,
    MaxPool2d,
    Relu,
    Reshape,
    TransposeConv2d,
)
from .losses import mse_loss, softmax, softmax_crossentropy
from .modelio import load_network, save_network
from .network import (
    ForwardTrace,
    Network,
    ShapeError,
    backward,
    build_network,
    flatten_grads,
    forward,
    infer_shapes,
)

__all__ = [
    "AdamState",
    "adam_update",
    "init_adam",
    "Conv2d",
    "Dense",
    "Dropout",
    "LayerSpec",
    "Linear",
    "MaxPool2d",
    "Relu",
    "Reshape",
    "TransposeConv2d",
    "mse_loss",
    "softmax",
    "softmax_crossentropy",
    "load_network",
    "save_network",
    "ForwardTrace",
    "Network",
    "ShapeError",
    "backward",
    "build_network",
    "flatten_grads",
    "forward",
    "infer_shapes",
]
