"""Stacked-autoencoder encoder plus MLP classifier over RP labels.

Default architecture and training settings:
encoder ``F -> F//4 (ELU) -> 64``, mirrored decoder, head of three 512-unit
ELU layers and a linear output followed by batch normalization; Adam at
1e-4 (SAE, MSE loss) and 1e-3 (classifier, cross-entropy), 30 epochs each,
batch size 20, seed 12345.
"""

import copy
import hashlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import NonFiniteLoss, OutOfRange, ShapeMismatch, UnknownLabel
from ..fpdb import NOT_DETECTED
from ..rng import RngStream
from .nn import (
    ELU,
    Adam,
    BatchNorm,
    Linear,
    backward_stack,
    forward_stack,
    mse_loss,
    softmax_cross_entropy,
)

RSSI_SPAN_LOW = float(NOT_DETECTED)
RSSI_SPAN_HIGH = -25.0

# stream ids: one per layer, plus two for minibatch shuffling
_ENCODER_STREAMS = (0, 1)
_DECODER_STREAMS = (2, 3)
_HEAD_STREAMS = (10, 11, 12, 13)
_SAE_SHUFFLE = 100
_CLS_SHUFFLE = 101


@dataclass(frozen=True)
class DnnConfig:
    n_aps: int = 465
    sae_dim: int = 64
    sae_mid: int = None
    hid_dim: int = 512
    n_classes: int = 30
    epochs_sae: int = 30
    epochs_cls: int = 30
    batch_size: int = 20
    lr_sae: float = 1e-4
    lr_cls: float = 1e-3
    seed: int = 12345
    freeze_encoder: bool = False
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.sae_mid is None:
            object.__setattr__(self, "sae_mid", max(self.n_aps // 4, 1))
        for name in ("n_aps", "sae_dim", "sae_mid", "hid_dim", "n_classes", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs_sae < 0 or self.epochs_cls < 0:
            raise ValueError("epochs must be >= 0")
        if not (self.lr_sae > 0 and self.lr_cls > 0):
            raise ValueError("learning rates must be > 0")

    def with_data_dims(self, n_aps, n_classes):
        """Copy with dimensions taken from the data; sae_mid is re-derived."""
        return replace(self, n_aps=n_aps, n_classes=n_classes, sae_mid=max(n_aps // 4, 1))

    def to_dict(self):
        return asdict(self)


def normalize_input(rows):
    """Map RSSI levels onto [0, 1]: -110 -> 0 and -25 -> 1, clamped."""
    x = np.asarray(rows, dtype=np.float64)
    if np.any(x < RSSI_SPAN_LOW) or np.any(x > 0) or not np.all(np.isfinite(x)):
        raise OutOfRange("RSSI entries must lie in [-110, 0]")
    return np.clip((x - RSSI_SPAN_LOW) / (RSSI_SPAN_HIGH - RSSI_SPAN_LOW), 0.0, 1.0)


def build_encoder(cfg):
    s = cfg.seed
    return [
        Linear(cfg.n_aps, cfg.sae_mid, RngStream(s, _ENCODER_STREAMS[0])),
        ELU(),
        Linear(cfg.sae_mid, cfg.sae_dim, RngStream(s, _ENCODER_STREAMS[1])),
    ]


def build_decoder(cfg):
    s = cfg.seed
    return [
        Linear(cfg.sae_dim, cfg.sae_mid, RngStream(s, _DECODER_STREAMS[0])),
        ELU(),
        Linear(cfg.sae_mid, cfg.n_aps, RngStream(s, _DECODER_STREAMS[1])),
    ]


def build_head(cfg):
    s = cfg.seed
    h = cfg.hid_dim
    return [
        Linear(cfg.sae_dim, h, RngStream(s, _HEAD_STREAMS[0])),
        ELU(),
        Linear(h, h, RngStream(s, _HEAD_STREAMS[1])),
        ELU(),
        Linear(h, h, RngStream(s, _HEAD_STREAMS[2])),
        ELU(),
        Linear(h, cfg.n_classes, RngStream(s, _HEAD_STREAMS[3])),
        BatchNorm(cfg.n_classes, cfg.bn_momentum, cfg.bn_eps),
    ]


@dataclass(eq=False)
class Encoder:
    layers: list
    cfg: DnnConfig
    loss_history: list = field(default_factory=list)

    def encode(self, x):
        return forward_stack(self.layers, x, train=False)[0]


def _minibatches(n, batch_size, stream):
    order = stream.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _check_input(x, cfg):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.n_aps:
        raise ShapeMismatch(f"expected rows of {cfg.n_aps} features, got shape {x.shape}")
    return x


def train_sae(x, cfg):
    """Train the stacked autoencoder on reconstruction MSE; return its encoder."""
    x = _check_input(x, cfg)
    encoder = build_encoder(cfg)
    layers = encoder + build_decoder(cfg)
    opt = Adam(layers, lr=cfg.lr_sae)
    shuffle = RngStream(cfg.seed, _SAE_SHUFFLE)
    history = []
    for epoch in range(cfg.epochs_sae):
        losses = []
        for idx in _minibatches(len(x), cfg.batch_size, shuffle.child(epoch)):
            xb = x[idx]
            recon, caches = forward_stack(layers, xb, train=True)
            loss, dout = mse_loss(recon, xb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"SAE loss diverged in epoch {epoch}")
            _, grads = backward_stack(layers, caches, dout)
            opt.step(grads)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return Encoder(encoder, cfg, history)


@dataclass(eq=False)
class DnnClassifier:
    encoder_layers: list
    head_layers: list
    class_labels: tuple
    cfg: DnnConfig
    ap_universe: tuple = ()
    loss_history: list = field(default_factory=list)

    @property
    def layers(self):
        return self.encoder_layers + self.head_layers

    @property
    def batchnorm(self):
        return self.head_layers[-1]

    def logits(self, x):
        x = _check_input(x, self.cfg)
        return forward_stack(self.layers, x, train=False)[0]

    def parameter_digest(self):
        """SHA-256 over every parameter and running statistic."""
        h = hashlib.sha256()
        for layer in self.layers:
            for name in sorted(layer.params):
                h.update(np.ascontiguousarray(layer.params[name]).tobytes())
        bn = self.batchnorm
        h.update(bn.running_mean.tobytes())
        h.update(bn.running_var.tobytes())
        return h.hexdigest()


def train_classifier(x, labels, encoder, cfg, class_labels=None):
    """Fine-tune ``encoder`` jointly with a fresh head on cross-entropy.

    With ``cfg.freeze_encoder`` the encoder weights are left untouched.  The
    caller's encoder object is never modified; a copy is trained.
    """
    x = _check_input(x, cfg)
    labels = np.asarray(labels)
    if len(labels) != len(x):
        raise ShapeMismatch("labels and rows differ in length")
    if class_labels is None:
        class_labels = tuple(sorted({int(v) for v in labels}))
    class_labels = tuple(int(c) for c in class_labels)
    index = {c: i for i, c in enumerate(class_labels)}
    try:
        targets = np.array([index[int(v)] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]} is not among the classes") from None
    if cfg.n_classes != len(class_labels):
        cfg = replace(cfg, n_classes=len(class_labels))

    enc_layers = copy.deepcopy(encoder.layers if isinstance(encoder, Encoder) else encoder)
    head = build_head(cfg)
    trainable = head if cfg.freeze_encoder else enc_layers + head
    opt = Adam(trainable, lr=cfg.lr_cls)
    shuffle = RngStream(cfg.seed, _CLS_SHUFFLE)
    history = []
    for epoch in range(cfg.epochs_cls):
        losses = []
        for idx in _minibatches(len(x), cfg.batch_size, shuffle.child(epoch)):
            if len(idx) < 2:
                continue  # batch statistics undefined for a single row
            xb = x[idx]
            if cfg.freeze_encoder:
                feats = forward_stack(enc_layers, xb, train=False)[0]
                logits, caches = forward_stack(head, feats, train=True)
            else:
                logits, caches = forward_stack(trainable, xb, train=True)
            loss, dlogits = softmax_cross_entropy(logits, targets[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"classifier loss diverged in epoch {epoch}")
            _, grads = backward_stack(head if cfg.freeze_encoder else trainable, caches, dlogits)
            opt.step(grads)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return DnnClassifier(enc_layers, head, class_labels, cfg, loss_history=history)


def argmax_lowest(logits):
    """Row-wise argmax; ties resolve to the lowest class index."""
    return np.argmax(np.asarray(logits, dtype=np.float64), axis=1)


def predict_labels(clf, x):
    idx = argmax_lowest(clf.logits(x))
    return np.asarray(clf.class_labels, dtype=np.int64)[idx]


def accuracy(clf, x, labels):
    pred = predict_labels(clf, x)
    return float(np.mean(pred == np.asarray(labels))) if len(pred) else float("nan")
