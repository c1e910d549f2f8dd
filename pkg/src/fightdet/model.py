"""LSTM / Bi-LSTM / Bi-LSTM + self-attention clip classifier.

Pipeline per clip (k frames, d features each)::

    [self-attention]  ->  LSTM or Bi-LSTM (final hidden state)  ->  head
    head: dense 1024 + relu, dropout, dense 50 + sigmoid, dense 2 + softmax

Class index 0 is ``nonfight`` and 1 is ``fight``.  The loss is the mean squared
error between the softmax probabilities and the one-hot target.

A batch is a list of k x d matrices.  The recurrent layers run on the batch
one timestep at a time, so every tensor stays 2-D (batch rows x width).
Gradients are hand-derived; ``fightdet.gradcheck`` compares them with central
finite differences.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError
from .numeric import (
    FLOAT,
    ParamStore,
    SeededRng,
    Tensor2,
    dropout_mask,
    glorot_init,
    matmul,
    mse_loss,
    relu,
    sigmoid,
    softmax_row,
)

VARIANTS = ("lstm", "bilstm", "bilstm_attn")
HEAD_WIDTHS = (1024, 50, 2)
CLASSES = ("nonfight", "fight")
GATES = ("i", "f", "o", "g")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "bilstm_attn"
    input_dim: int = 64
    hidden_size: int = 128
    frames: int = 10
    dropout_rate: float = 0.5
    seed: int = 0
    # feature pipeline metadata, needed to rebuild inputs at predict time
    backbone: str = "toy-8x8"
    feature_seed: int = 0
    normalize: str = "none"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("input_dim", "hidden_size", "frames"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def bidirectional(self) -> bool:
        return self.variant != "lstm"

    @property
    def attention(self) -> bool:
        return self.variant == "bilstm_attn"

    @property
    def summary_dim(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def one_hot(label: int, dtype=FLOAT) -> Tensor2:
    t = np.zeros((1, 2), dtype=dtype)
    t[0, label] = 1.0
    return t


# -- parameters ---------------------------------------------------------------

def param_shapes(config: ModelConfig) -> "List[Tuple[str, Tuple[int, int]]]":
    d, h = config.input_dim, config.hidden_size
    shapes = []
    if config.attention:
        shapes += [(f"attn.W_{n}", (d, d)) for n in ("q", "k", "v")]
    cells = ["fwd", "bwd"] if config.bidirectional else ["fwd"]
    for cell in cells:
        shapes += [(f"{cell}.W_{g}", (d, h)) for g in GATES]
        shapes += [(f"{cell}.U_{g}", (h, h)) for g in GATES]
        shapes += [(f"{cell}.b_{g}", (1, h)) for g in GATES]
    w1, w2, w3 = HEAD_WIDTHS
    shapes += [
        ("head.W1", (config.summary_dim, w1)), ("head.b1", (1, w1)),
        ("head.W2", (w1, w2)), ("head.b2", (1, w2)),
        ("head.W3", (w2, w3)), ("head.b3", (1, w3)),
    ]
    return shapes


def init_params(config: ModelConfig, rng: Optional[SeededRng] = None,
                init: str = "glorot", dtype=FLOAT) -> ParamStore:
    """Glorot-uniform weight matrices and zero biases (``init="zeros"``: all zero)."""
    rng = rng if rng is not None else SeededRng(config.seed)
    store = ParamStore()
    for name, (r, c) in param_shapes(config):
        is_bias = name.rsplit(".", 1)[1].startswith("b")
        if init == "zeros" or is_bias:
            store.add(name, np.zeros((r, c), dtype=dtype))
        elif init == "glorot":
            store.add(name, glorot_init(r, c, rng, dtype))
        else:
            raise ConfigurationError(f"unknown init scheme {init!r}")
    return store


def validate_params(config: ModelConfig, params: ParamStore) -> None:
    expected = dict(param_shapes(config))
    names = params.names()
    if set(names) != set(expected):
        missing = sorted(set(expected) - set(names))
        extra = sorted(set(names) - set(expected))
        raise ConfigurationError(
            f"parameters do not match variant {config.variant}: missing {missing}, unexpected {extra}"
        )
    for name in names:
        if params[name].shape != expected[name]:
            raise ConfigurationError(f"{name}: shape {params[name].shape}, expected {expected[name]}")


def cell_view(params: ParamStore, prefix: str) -> Dict[str, Tensor2]:
    view = {}
    for g in GATES:
        for kind in ("W", "U", "b"):
            view[f"{kind}_{g}"] = params[f"{prefix}.{kind}_{g}"]
    return view


def attention_view(params: ParamStore) -> Dict[str, Tensor2]:
    return {f"W_{n}": params[f"attn.W_{n}"] for n in ("q", "k", "v")}


def head_view(params: ParamStore) -> Dict[str, Tensor2]:
    return {n: params[f"head.{n}"] for n in ("W1", "b1", "W2", "b2", "W3", "b3")}


# -- LSTM ---------------------------------------------------------------------

def _check_cell(x: Tensor2, h_prev: Tensor2, p: Mapping[str, Tensor2]) -> None:
    d, h = p["W_i"].shape
    if x.shape[1] != d:
        raise DimensionError(f"input {x.shape} does not match input weights {p['W_i'].shape}")
    if h_prev.shape != (x.shape[0], h):
        raise DimensionError(f"hidden state {h_prev.shape} does not match hidden size {h}")


def _cell_step(x, h_prev, c_prev, p):
    pre = {g: matmul(x, p[f"W_{g}"]) + matmul(h_prev, p[f"U_{g}"]) + p[f"b_{g}"] for g in GATES}
    i = sigmoid(pre["i"])
    f = sigmoid(pre["f"])
    o = sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def lstm_cell_forward(x_t: Tensor2, h_prev: Tensor2, c_prev: Tensor2,
                      p: Mapping[str, Tensor2]) -> Tuple[Tensor2, Tensor2]:
    _check_cell(x_t, h_prev, p)
    if c_prev.shape != h_prev.shape:
        raise DimensionError(f"cell state {c_prev.shape} vs hidden state {h_prev.shape}")
    h, c, _ = _cell_step(x_t, h_prev, c_prev, p)
    return h, c


def _lstm_run(steps: Sequence[Tensor2], p):
    """Run a cell over per-timestep (batch x d) inputs from a zero state."""
    b = steps[0].shape[0]
    hsize = p["U_i"].shape[0]
    h = np.zeros((b, hsize), dtype=p["U_i"].dtype)
    c = np.zeros_like(h)
    caches = []
    for x in steps:
        _check_cell(x, h, p)
        h, c, cache = _cell_step(x, h, c, p)
        caches.append(cache)
    return h, caches


def _lstm_back(dh: Tensor2, caches, p):
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dc = np.zeros_like(dh)
    dxs = [None] * len(caches)
    for t in range(len(caches) - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, tc = caches[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        da = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c_prev * f * (1.0 - f),
            "o": do * o * (1.0 - o),
            "g": dc * i * (1.0 - g * g),
        }
        dx = None
        dh = None
        for gate, a in da.items():
            grads[f"W_{gate}"] += matmul(x.T, a)
            grads[f"U_{gate}"] += matmul(h_prev.T, a)
            grads[f"b_{gate}"] += a.sum(axis=0, keepdims=True)
            gx = matmul(a, p[f"W_{gate}"].T)
            gh = matmul(a, p[f"U_{gate}"].T)
            dx = gx if dx is None else dx + gx
            dh = gh if dh is None else dh + gh
        dc = dc * f
        dxs[t] = dx
    return grads, dxs


def lstm_forward(X: Tensor2, p: Mapping[str, Tensor2]) -> Tensor2:
    """Final hidden state (1 x h) after running the cell over the rows of X."""
    if X.shape[0] < 1:
        raise DimensionError("sequence must have at least one row")
    h, _ = _lstm_run([X[t:t + 1] for t in range(X.shape[0])], p)
    return h


def bilstm_forward(X: Tensor2, p_fwd: Mapping[str, Tensor2],
                   p_bwd: Mapping[str, Tensor2]) -> Tensor2:
    if p_fwd["U_i"].shape != p_bwd["U_i"].shape:
        raise DimensionError(
            f"forward hidden size {p_fwd['U_i'].shape[0]} != backward {p_bwd['U_i'].shape[0]}"
        )
    return np.concatenate([lstm_forward(X, p_fwd), lstm_forward(X[::-1], p_bwd)], axis=1)


# -- self-attention -----------------------------------------------------------

def _attn_forward(X, p):
    d = X.shape[1]
    if p["W_q"].shape != (d, d):
        raise DimensionError(f"attention weights {p['W_q'].shape} do not fit input {X.shape}")
    Q = matmul(X, p["W_q"])
    K = matmul(X, p["W_k"])
    V = matmul(X, p["W_v"])
    A = softmax_row(matmul(Q, K.T) / np.asarray(math.sqrt(d), dtype=X.dtype))
    return matmul(A, V), (X, Q, K, V, A)


def _attn_back(dY, cache, p):
    X, Q, K, V, A = cache
    scale = np.asarray(math.sqrt(X.shape[1]), dtype=X.dtype)
    dA = matmul(dY, V.T)
    dV = matmul(A.T, dY)
    dS = A * (dA - (dA * A).sum(axis=1, keepdims=True)) / scale
    dQ = matmul(dS, K)
    dK = matmul(dS.T, Q)
    grads = {"W_q": matmul(X.T, dQ), "W_k": matmul(X.T, dK), "W_v": matmul(X.T, dV)}
    dX = matmul(dQ, p["W_q"].T) + matmul(dK, p["W_k"].T) + matmul(dV, p["W_v"].T)
    return grads, dX


def attention_weights(X: Tensor2, p: Mapping[str, Tensor2]) -> Tensor2:
    return _attn_forward(X, p)[1][4]


def self_attention(X: Tensor2, p: Mapping[str, Tensor2]) -> Tensor2:
    """Single-head scaled dot-product attention, k x d in and out."""
    return _attn_forward(X, p)[0]


# -- dense head ---------------------------------------------------------------

def _head_forward(v, p, mask=None):
    if v.shape[1] != p["W1"].shape[0]:
        raise DimensionError(f"head input {v.shape} does not match W1 {p['W1'].shape}")
    z1 = matmul(v, p["W1"]) + p["b1"]
    a1 = relu(z1)
    a1d = a1 if mask is None else a1 * mask
    s = sigmoid(matmul(a1d, p["W2"]) + p["b2"])
    probs = softmax_row(matmul(s, p["W3"]) + p["b3"])
    return probs, (v, z1, a1d, s, probs)


def _head_back(dprobs, cache, p, mask=None):
    v, z1, a1d, s, probs = cache
    dz3 = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
    grads = {"W3": matmul(s.T, dz3), "b3": dz3.sum(axis=0, keepdims=True)}
    dz2 = matmul(dz3, p["W3"].T) * s * (1.0 - s)
    grads["W2"] = matmul(a1d.T, dz2)
    grads["b2"] = dz2.sum(axis=0, keepdims=True)
    da1 = matmul(dz2, p["W2"].T)
    if mask is not None:
        da1 = da1 * mask
    dz1 = da1 * (z1 > 0)
    grads["W1"] = matmul(v.T, dz1)
    grads["b1"] = dz1.sum(axis=0, keepdims=True)
    return grads, matmul(dz1, p["W1"].T)


def head_forward(v: Tensor2, p: Mapping[str, Tensor2], dropout_rate: float = 0.0,
                 rng: Optional[SeededRng] = None, training: bool = False) -> Tensor2:
    mask = None
    if training and dropout_rate > 0.0:
        mask = dropout_mask((v.shape[0], p["W1"].shape[1]), dropout_rate, rng, v.dtype)
    return _head_forward(v, p, mask)[0]


# -- full model ---------------------------------------------------------------

def _as_batch(features, config: ModelConfig, dtype) -> List[Tensor2]:
    if not isinstance(features, (list, tuple)):
        features = [features]
    batch = []
    for f in features:
        m = getattr(f, "matrix", f)
        if m.shape != (config.frames, config.input_dim):
            src = getattr(f, "source_id", "")
            raise DimensionError(
                f"{src}: features {m.shape} do not match model ({config.frames}, {config.input_dim})"
            )
        batch.append(np.asarray(m, dtype=dtype))
    if not batch:
        raise DimensionError("empty batch")
    return batch


def _forward(batch, config, params, rng=None, training=False):
    """Forward pass over a batch, returning probabilities and a backward cache."""
    attn_caches = None
    if config.attention:
        pa = attention_view(params)
        outs = [_attn_forward(X, pa) for X in batch]
        attn_caches = [c for _, c in outs]
        seqs = [y for y, _ in outs]
    else:
        seqs = batch
    k = config.frames
    steps = [np.concatenate([s[t:t + 1] for s in seqs], axis=0) for t in range(k)]
    p_fwd = cell_view(params, "fwd")
    h_f, caches_f = _lstm_run(steps, p_fwd)
    caches_b = None
    rec_mask = None
    if config.bidirectional:
        h_b, caches_b = _lstm_run(steps[::-1], cell_view(params, "bwd"))
        summary = np.concatenate([h_f, h_b], axis=1)
        if training and config.dropout_rate > 0.0:
            rec_mask = dropout_mask(summary.shape, config.dropout_rate, rng, summary.dtype)
            summary = summary * rec_mask
    else:
        summary = h_f
    head_mask = None
    if training and config.dropout_rate > 0.0:
        head_mask = dropout_mask((len(batch), HEAD_WIDTHS[0]), config.dropout_rate, rng,
                                 summary.dtype)
    probs, head_cache = _head_forward(summary, head_view(params), head_mask)
    cache = (attn_caches, caches_f, caches_b, rec_mask, head_mask, head_cache)
    return probs, cache


def _backward(dprobs, cache, config, params):
    attn_caches, caches_f, caches_b, rec_mask, head_mask, head_cache = cache
    grads: Dict[str, Tensor2] = {}
    hg, dsummary = _head_back(dprobs, head_cache, head_view(params), head_mask)
    grads.update({f"head.{n}": g for n, g in hg.items()})
    h = config.hidden_size
    if config.bidirectional:
        if rec_mask is not None:
            dsummary = dsummary * rec_mask
        gf, dsteps = _lstm_back(dsummary[:, :h], caches_f, cell_view(params, "fwd"))
        gb, dsteps_rev = _lstm_back(dsummary[:, h:], caches_b, cell_view(params, "bwd"))
        dsteps = [a + b for a, b in zip(dsteps, dsteps_rev[::-1])]
        grads.update({f"bwd.{n}": g for n, g in gb.items()})
    else:
        gf, dsteps = _lstm_back(dsummary, caches_f, cell_view(params, "fwd"))
    grads.update({f"fwd.{n}": g for n, g in gf.items()})
    if config.attention:
        pa = attention_view(params)
        acc = {n: np.zeros_like(v) for n, v in pa.items()}
        for b, c in enumerate(attn_caches):
            dY = np.concatenate([ds[b:b + 1] for ds in dsteps], axis=0)
            ga, _ = _attn_back(dY, c, pa)
            for n in acc:
                acc[n] += ga[n]
        grads.update({f"attn.{n}": g for n, g in acc.items()})
    return grads


def model_forward_batch(features, config: ModelConfig, params: ParamStore,
                        training: bool = False, rng: Optional[SeededRng] = None) -> Tensor2:
    """Class probabilities (batch x 2) for a list of feature sequences."""
    batch = _as_batch(features, config, params.dtype)
    return _forward(batch, config, params, rng, training)[0]


def model_forward(features, config: ModelConfig, params: ParamStore,
                  training: bool = False, rng: Optional[SeededRng] = None) -> Tensor2:
    validate_params(config, params)
    return model_forward_batch([features], config, params, training, rng)


def loss_and_grad(features, targets: Tensor2, config: ModelConfig, params: ParamStore,
                  training: bool = False, rng: Optional[SeededRng] = None):
    """MSE loss of a batch; gradients are written into ``params``.

    Returns ``(loss, probabilities)``.
    """
    batch = _as_batch(features, config, params.dtype)
    targets = np.asarray(targets, dtype=params.dtype)
    if targets.shape != (len(batch), 2):
        raise DimensionError(f"targets {targets.shape} do not match batch of {len(batch)}")
    probs, cache = _forward(batch, config, params, rng, training)
    loss = mse_loss(probs, targets)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    dprobs = (2.0 / probs.size) * (probs - targets)
    grads = _backward(dprobs.astype(params.dtype), cache, config, params)
    for name in params.names():
        params.set_grad(name, grads[name])
    return loss, probs


def model_backward(features, config: ModelConfig, params: ParamStore, target: Tensor2,
                   training: bool = False, rng: Optional[SeededRng] = None) -> float:
    """Exact gradients of the MSE loss for one clip (or a batch); returns the loss.

    With ``training=True`` the dropout masks drawn from ``rng`` are used in both
    passes; leave it off for gradient checks.
    """
    validate_params(config, params)
    if not isinstance(features, (list, tuple)):
        features = [features]
    target = np.asarray(target)
    if target.ndim == 1:
        target = target.reshape(1, -1)
    return loss_and_grad(features, target, config, params, training, rng)[0]


def predict_label(probs: Tensor2) -> np.ndarray:
    """Row-wise argmax; exact ties go to class 0 (nonfight)."""
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)
