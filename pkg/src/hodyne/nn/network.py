"""Network container, shape inference, initialization, forward and backward.

A Network is an ordered list of layer specs plus per-layer parameter dicts.
``forward`` records everything ``backward`` needs in a ForwardTrace; traces
become stale as soon as the parameters are updated (the trainer bumps the
network version after each optimizer step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .layers import LayerSpec


class ShapeError(ValueError):
    """Shape inconsistency, annotated with the offending layer index."""

    def __init__(self, layer_index: int, message: str):
        super().__init__(f"layer {layer_index}: {message}")
        self.layer_index = layer_index


def infer_shapes(specs: list[LayerSpec], input_shape: tuple) -> list[tuple]:
    """Per-layer output shapes (sample shapes, no batch axis).

    Spatial shapes are (H, W, C); Dense flattens whatever it receives and
    emits a flat (D,) shape.
    """
    shapes = []
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        if isinstance(spec, L.Conv2d):
            if len(shape) != 3:
                raise ShapeError(i, f"conv needs a spatial input, got {shape}")
            h, w, _ = shape
            s = spec.stride
            shape = (-(-h // s), -(-w // s), spec.out_maps)
        elif isinstance(spec, L.TransposeConv2d):
            if len(shape) != 3:
                raise ShapeError(i, f"transpose conv needs a spatial input, got {shape}")
            h, w, _ = shape
            shape = (h * spec.stride, w * spec.stride, spec.out_maps)
        elif isinstance(spec, L.MaxPool2d):
            if len(shape) != 3:
                raise ShapeError(i, f"max-pool needs a spatial input, got {shape}")
            h, w, c = shape
            k = spec.stride
            if h % k != 0 or w % k != 0:
                raise ShapeError(i, f"max-pool needs even extents, got {h}x{w}")
            shape = (h // k, w // k, c)
        elif isinstance(spec, L.Dense):
            shape = (spec.out_units,)
        elif isinstance(spec, L.Reshape):
            if L.flat_size(shape) != L.flat_size(spec.shape):
                raise ShapeError(
                    i, f"cannot reshape {shape} ({L.flat_size(shape)} values) to {spec.shape}"
                )
            shape = tuple(spec.shape)
        elif isinstance(spec, (L.Dropout, L.Relu, L.Linear)):
            pass
        else:
            raise ShapeError(i, f"unknown layer spec {spec!r}")
        shapes.append(shape)
    return shapes


def init_params(specs: list[LayerSpec], input_shape: tuple, rng: np.random.Generator):
    """He-scaled normal weights, zero biases; paramless layers get {}."""
    shapes = infer_shapes(specs, input_shape)
    params = []
    shape = tuple(input_shape)
    for spec, out_shape in zip(specs, shapes):
        if isinstance(spec, L.Conv2d):
            kh, kw = spec.kernel
            wshape = (kh, kw, shape[2], spec.out_maps)
        elif isinstance(spec, L.TransposeConv2d):
            kh, kw = spec.kernel
            wshape = (kh, kw, spec.out_maps, shape[2])
        elif isinstance(spec, L.Dense):
            wshape = (L.flat_size(shape), spec.out_units)
        else:
            params.append({})
            shape = out_shape
            continue
        scale = np.sqrt(2.0 / L.fan_in(spec, shape))
        params.append(
            {
                "w": rng.standard_normal(wshape) * scale,
                "b": np.zeros(spec.out_maps if not isinstance(spec, L.Dense) else spec.out_units),
            }
        )
        shape = out_shape
    return params


@dataclass
class Network:
    layers: list[LayerSpec]
    params: list[dict]
    input_shape: tuple
    version: int = 0

    @property
    def output_shape(self) -> tuple:
        return infer_shapes(self.layers, self.input_shape)[-1]

    def bump_version(self) -> None:
        """Invalidate outstanding forward traces after a parameter update."""
        self.version += 1

    def parameter_arrays(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (w then b per layer)."""
        out = []
        for p in self.params:
            if p:
                out.append(p["w"])
                out.append(p["b"])
        return out

    def n_parameters(self) -> int:
        return sum(a.size for a in self.parameter_arrays())


def build_network(specs: list[LayerSpec], input_shape: tuple, seed: int) -> Network:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xA11,)))
    infer_shapes(specs, input_shape)  # validate before allocating
    return Network(list(specs), init_params(specs, input_shape, rng), tuple(input_shape))


@dataclass
class ForwardTrace:
    """Activations and per-layer caches from one forward pass."""

    net: Network
    version: int
    training: bool
    inputs: list  # input array of each layer
    caches: list
    output: np.ndarray


def forward(
    net: Network,
    batch: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Run the batch through every layer; dropout only fires when training."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != tuple(net.input_shape):
        raise ShapeError(0, f"input shape {batch.shape[1:]} != expected {net.input_shape}")
    x = batch
    inputs, caches = [], []
    for i, (spec, p) in enumerate(zip(net.layers, net.params)):
        inputs.append(x)
        if isinstance(spec, L.Conv2d):
            x, cache = L.conv2d_forward(x, p["w"], p["b"], spec.stride)
        elif isinstance(spec, L.TransposeConv2d):
            x, cache = L.tconv2d_forward(x, p["w"], p["b"], spec.stride)
        elif isinstance(spec, L.MaxPool2d):
            try:
                x, cache = L.maxpool2d_forward(x, spec.stride)
            except ValueError as e:
                raise ShapeError(i, str(e)) from e
        elif isinstance(spec, L.Dense):
            x, cache = L.dense_forward(x, p["w"], p["b"])
        elif isinstance(spec, L.Dropout):
            x, cache = L.dropout_forward(x, spec.drop_rate, training, rng)
        elif isinstance(spec, L.Relu):
            x, cache = L.relu_forward(x)
        elif isinstance(spec, L.Linear):
            cache = None
        elif isinstance(spec, L.Reshape):
            cache = x.shape
            x = x.reshape((x.shape[0],) + tuple(spec.shape))
        caches.append(cache)
    return ForwardTrace(net, net.version, training, inputs, caches, x)


def backward(
    net: Network,
    trace: ForwardTrace,
    grad_output: np.ndarray,
    need_input_grad: bool = True,
) -> tuple[list[dict], np.ndarray | None]:
    """Per-layer parameter gradients plus the gradient w.r.t. the input.

    Dropout masks recorded by the forward pass are reused, so the pair
    (forward, backward) differentiates one fixed stochastic function.
    """
    if trace.net is not net:
        raise ValueError("trace was produced by a different network")
    if not trace.training:
        raise ValueError("backward requires a trace recorded with training=True")
    if trace.version != net.version:
        raise ValueError("stale trace: parameters changed since the forward pass")
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ShapeError(len(net.layers) - 1, f"grad shape {g.shape} != output {trace.output.shape}")
    grads: list[dict] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        spec, p, cache = net.layers[i], net.params[i], trace.caches[i]
        want_gx = need_input_grad or i > 0
        if isinstance(spec, L.Conv2d):
            gw, gb, g = L.conv2d_backward(g, p["w"], cache, spec.stride, want_gx)
            grads[i] = {"w": gw, "b": gb}
        elif isinstance(spec, L.TransposeConv2d):
            gw, gb, g = L.tconv2d_backward(g, p["w"], cache, spec.stride, want_gx)
            grads[i] = {"w": gw, "b": gb}
        elif isinstance(spec, L.MaxPool2d):
            g = L.maxpool2d_backward(g, cache, spec.stride)
            grads[i] = {}
        elif isinstance(spec, L.Dense):
            gw, gb, g = L.dense_backward(g, p["w"], cache, want_gx)
            grads[i] = {"w": gw, "b": gb}
        elif isinstance(spec, L.Dropout):
            g = L.dropout_backward(g, cache) if cache is not None else g
            grads[i] = {}
        elif isinstance(spec, L.Relu):
            g = L.relu_backward(g, cache)
            grads[i] = {}
        elif isinstance(spec, L.Linear):
            grads[i] = {}
        elif isinstance(spec, L.Reshape):
            g = g.reshape(cache)
            grads[i] = {}
    return grads, g


def flatten_grads(grads: list[dict]) -> list[np.ndarray]:
    """Gradient arrays in the same declaration order as Network params."""
    out = []
    for gd in grads:
        if gd:
            out.append(gd["w"])
            out.append(gd["b"])
    return out
