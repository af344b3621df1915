"""The two receiver networks: a denoising autoencoder and a classifier.

The denoiser (GNN) maps noisy low-amplitude quadrature images to clean
high-amplitude reconstructions; the classifier (CNN) assigns one of the four
QPSK keys.  Training is fully seeded and deterministic.  ``evaluate`` scores
a test set with or without the denoiser in front of the classifier and
composes the network error with the analytic homodyne limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .homodyne import HomodyneDataset, QuadratureImage
from .limits import (
    QpskKey,
    combine_error,
    db_to_linear,
    p_err_helstrom,
    p_err_homodyne,
    relative_errors,
)

_EVAL_CHUNK = 60  # bounds conv scratch memory during batched inference


@dataclass(frozen=True)
class GnnConfig:
    input_width: int = 30
    epochs: int = 150
    batch_size: int = 10
    learning_rate: float = 0.008
    dropout_rate: float = 0.2
    seed: int = 0

    @property
    def latent_units(self) -> int:
        return (self.input_width // 2) ** 2


@dataclass(frozen=True)
class CnnConfig:
    input_width: int = 30
    epochs: int = 10
    batch_size: int = 1
    learning_rate: float = 0.001
    fc_units: tuple[int, int] = (400, 50)
    dropout_rates: tuple[float, float] = (0.8, 0.4)
    classes: int = 4
    seed: int = 0


def _check_width(w: int) -> None:
    if w % 2 != 0 or w < 4:
        raise ValueError(f"input width must be even and >= 4, got {w}")


def build_gnn(cfg: GnnConfig) -> nn.Network:
    """Denoising autoencoder; latent size is (W/2)^2, output is W x W x 1."""
    _check_width(cfg.input_width)
    half = cfg.input_width // 2
    r = cfg.dropout_rate
    specs = [
        # encoder
        nn.Conv2d((5, 5), 20),
        nn.Relu(),
        nn.Dropout(r),
        nn.MaxPool2d((2, 2), 2),
        nn.Conv2d((5, 5), 20),
        nn.Relu(),
        nn.Dropout(r),
        nn.Dense(cfg.latent_units),
        # decoder
        nn.Dense(half * half * 20),
        nn.Dropout(r),
        nn.Reshape((half, half, 20)),
        nn.Conv2d((5, 5), 20),
        nn.Relu(),
        nn.Dropout(r),
        nn.TransposeConv2d((5, 5), 20, stride=2),
        nn.Relu(),
        nn.Dropout(r),
        nn.Conv2d((5, 5), 1),
    ]
    return nn.build_network(specs, (cfg.input_width, cfg.input_width, 1), cfg.seed)


def build_cnn(cfg: CnnConfig) -> nn.Network:
    """Classifier emitting four logits; softmax lives at the loss boundary."""
    _check_width(cfg.input_width)
    if cfg.classes != 4:
        raise ValueError(f"classifier is fixed to the 4 QPSK keys, got classes={cfg.classes}")
    fc1, fc2 = cfg.fc_units
    d1, d2 = cfg.dropout_rates
    specs = [
        nn.Conv2d((2, 2), 10),
        nn.Relu(),
        nn.MaxPool2d((2, 2), 2),
        nn.Dense(fc1),
        nn.Relu(),
        nn.Dropout(d1),
        nn.Dense(fc2),
        nn.Relu(),
        nn.Dropout(d2),
        nn.Dense(cfg.classes),
        nn.Linear(),
    ]
    return nn.build_network(specs, (cfg.input_width, cfg.input_width, 1), cfg.seed)


def _training_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    shuffle = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x5F,)))
    dropout = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xD0,)))
    return shuffle, dropout


def train_gnn(
    noisy: HomodyneDataset, targets: HomodyneDataset, cfg: GnnConfig
) -> tuple[nn.Network, list[float]]:
    """Train the denoiser on index-paired (noisy, target) images.

    The i-th noisy image of each key trains against the i-th target image of
    the same key.  Datasets are expected in the gnn-input / gnn-target roles.
    Returns the network and the per-epoch mean reconstruction loss.
    """
    if noisy.width != targets.width:
        raise ValueError(f"width mismatch: noisy {noisy.width} vs targets {targets.width}")
    if noisy.n_per_key != targets.n_per_key:
        raise ValueError(
            f"per-key count mismatch: noisy {noisy.n_per_key} vs targets {targets.n_per_key}"
        )
    if noisy.width != cfg.input_width:
        raise ValueError(f"dataset width {noisy.width} != configured {cfg.input_width}")
    net = build_gnn(cfg)
    x = noisy.pixel_stack()[..., None]
    t = targets.pixel_stack()[..., None]
    history = _fit(
        net,
        x,
        t,
        loss_fn=nn.mse_loss,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
    )
    return net, history


@dataclass
class CnnTrainReport:
    n_train: int
    n_test: int
    accuracy: float
    epoch_losses: list[float] = field(default_factory=list)


_TRAIN_PER_KEY = 170
_TEST_PER_KEY = 30


def train_cnn(labeled: HomodyneDataset, cfg: CnnConfig) -> tuple[nn.Network, CnnTrainReport]:
    """Train the classifier on a 200-per-key set, split 170 train / 30 test.

    The first 170 images of each key block train; the trailing 30 are held
    out and scored after training.  Targets are one-hot per key index.
    """
    if labeled.n_per_key != _TRAIN_PER_KEY + _TEST_PER_KEY:
        raise ValueError(
            f"classifier training expects {_TRAIN_PER_KEY + _TEST_PER_KEY} images per key, "
            f"got {labeled.n_per_key}"
        )
    if labeled.width != cfg.input_width:
        raise ValueError(f"dataset width {labeled.width} != configured {cfg.input_width}")
    net = build_cnn(cfg)
    pixels = labeled.pixel_stack()[..., None]
    keys = labeled.key_indices()
    per = labeled.n_per_key
    train_idx, test_idx = [], []
    for block in range(4):
        start = block * per
        train_idx.extend(range(start, start + _TRAIN_PER_KEY))
        test_idx.extend(range(start + _TRAIN_PER_KEY, start + per))
    onehot = np.eye(cfg.classes)[keys - 1]
    history = _fit(
        net,
        pixels[train_idx],
        onehot[train_idx],
        loss_fn=nn.softmax_crossentropy,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
    )
    predicted = _predict_keys(net, pixels[test_idx])
    accuracy = float(np.mean(predicted == keys[test_idx]))
    return net, CnnTrainReport(
        n_train=len(train_idx), n_test=len(test_idx), accuracy=accuracy, epoch_losses=history
    )


def _fit(net, x, t, loss_fn, epochs, batch_size, learning_rate, seed) -> list[float]:
    """Shuffled minibatch Adam loop shared by both trainers."""
    shuffle_rng, dropout_rng = _training_rngs(seed)
    adam = nn.init_adam(net.parameter_arrays(), lr=learning_rate)
    n = x.shape[0]
    history = []
    for _ in range(epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            trace = nn.forward(net, x[idx], training=True, rng=dropout_rng)
            loss, grad = loss_fn(trace.output, t[idx])
            grads, _ = nn.backward(net, trace, grad, need_input_grad=False)
            nn.adam_update(adam, net.parameter_arrays(), nn.flatten_grads(grads))
            net.bump_version()
            total += loss * len(idx)
        history.append(total / n)
    return history


def _forward_chunked(net: nn.Network, x: np.ndarray) -> np.ndarray:
    outs = [
        nn.forward(net, x[i : i + _EVAL_CHUNK]).output for i in range(0, x.shape[0], _EVAL_CHUNK)
    ]
    return np.concatenate(outs)


def _predict_keys(cnn: nn.Network, pixels: np.ndarray) -> np.ndarray:
    logits = _forward_chunked(cnn, pixels)
    return logits.argmax(axis=1) + 1


def reconstruct(gnn: nn.Network, img: QuadratureImage) -> QuadratureImage:
    """Denoise one image; output pixels are clamped back into [0, 1]."""
    if (img.width, img.width, 1) != tuple(gnn.input_shape):
        raise ValueError(f"image width {img.width} does not match network {gnn.input_shape}")
    out = nn.forward(gnn, img.pixels[None, :, :, None]).output
    return QuadratureImage(img.width, np.clip(out[0, :, :, 0], 0.0, 1.0))


def classify(cnn: nn.Network, img: QuadratureImage) -> tuple[QpskKey, np.ndarray]:
    """Most likely key plus the four class probabilities (ties -> lowest key)."""
    if (img.width, img.width, 1) != tuple(cnn.input_shape):
        raise ValueError(f"image width {img.width} does not match network {cnn.input_shape}")
    logits = nn.forward(cnn, img.pixels[None, :, :, None]).output[0]
    probs = nn.softmax(logits)
    return QpskKey(int(np.argmax(logits)) + 1), probs


@dataclass
class EvalReport:
    """Error probabilities of one receiver variant on one test set."""

    n_total: int
    n_wrong: int
    p_network: float
    p_hd: float
    p_hel: float
    p_err: float
    p_relative: float
    p_relative_hd: float
    confusion: np.ndarray  # [true key - 1, predicted key - 1]
    signal_db: float
    used_gnn: bool

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "confusion"}
        d["confusion"] = self.confusion.tolist()
        return d


def evaluate(
    test: HomodyneDataset, cnn: nn.Network, gnn: nn.Network | None = None
) -> EvalReport:
    """Score a test set, optionally denoising before classification.

    Without ``gnn`` the raw images go straight to the classifier (HD-CNN);
    with it, reconstructions are classified instead (HD-GNN-CNN).  The overall
    error composes the misclassification rate with the homodyne limit at the
    test set's amplitude; relative errors subtract the Helstrom limit.
    """
    if len(test.entries) == 0:
        raise ValueError("test dataset is empty")
    if (test.width, test.width, 1) != tuple(cnn.input_shape):
        raise ValueError(f"test width {test.width} does not match classifier {cnn.input_shape}")
    pixels = test.pixel_stack()[..., None]
    if gnn is not None:
        if (test.width, test.width, 1) != tuple(gnn.input_shape):
            raise ValueError(f"test width {test.width} does not match denoiser {gnn.input_shape}")
        pixels = np.clip(_forward_chunked(gnn, pixels), 0.0, 1.0)
    predicted = _predict_keys(cnn, pixels)
    truth = test.key_indices()
    confusion = np.zeros((4, 4), dtype=np.int64)
    np.add.at(confusion, (truth - 1, predicted - 1), 1)
    n_total = len(truth)
    n_wrong = int(np.sum(predicted != truth))
    p_network = n_wrong / n_total
    amplitude = db_to_linear(test.signal_db)
    p_hd = p_err_homodyne(amplitude)
    p_hel = p_err_helstrom(amplitude)
    p_err = combine_error(p_hd, p_network)
    p_rel, p_rel_hd = relative_errors(p_err, p_hd, p_hel)
    return EvalReport(
        n_total=n_total,
        n_wrong=n_wrong,
        p_network=p_network,
        p_hd=p_hd,
        p_hel=p_hel,
        p_err=p_err,
        p_relative=p_rel,
        p_relative_hd=p_rel_hd,
        confusion=confusion,
        signal_db=test.signal_db,
        used_gnn=gnn is not None,
    )
