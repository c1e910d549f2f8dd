"""Central-difference verification of the classifier's analytic gradients.

The head has ~60k weights (1024 x 50 alone is 51200), so one full forward per
perturbed scalar is too slow for routine checks.  Perturbing a single entry
of a dense layer ``z = x W + b`` only shifts one column of ``z`` by
``eps * x[a]``; ``dense_layer_fd`` applies all such shifts as rows of a batch
and pushes the batch through the rest of the head in one go.  It is still a
central difference of the loss, with no use of any derivative formula.
Everything upstream of the head goes through the generic
``finite_diff_grad``.
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable, Optional

import numpy as np

from .model import ModelConfig, _forward, head_view, init_params, loss_and_grad, one_hot
from .numeric import (
    ParamStore,
    SeededRng,
    Tensor2,
    finite_diff_grad,
    mse_loss,
    relu,
    sigmoid,
    softmax_row,
)

DENSE_LAYERS = ("head.W1", "head.b1", "head.W2", "head.b2")


def relative_error(analytic: Tensor2, numeric: Tensor2, floor: float = 1e-6) -> float:
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _rowwise_mse(probs: Tensor2, target: Tensor2) -> np.ndarray:
    diff = probs - target
    return np.mean(diff * diff, axis=1)


def dense_layer_fd(inp: Tensor2, z: Tensor2, tail: Callable[[Tensor2], np.ndarray],
                   eps: float, chunk_rows: int = 1 << 12):
    """Central differences for the weight and bias of ``z = inp @ W + b``.

    ``inp`` and ``z`` are single rows.  ``tail`` maps a batch of layer
    outputs (rows) to the per-row loss.
    """
    inp = inp.reshape(-1)
    z = z.reshape(1, -1)
    n_in, n_out = inp.size, z.shape[1]
    # bias entries are weight entries with a unit input
    coeff = np.concatenate([inp, [1.0]])
    losses = np.empty((2, n_in + 1, n_out))
    per_block = max(1, chunk_rows // n_out)
    cols = np.arange(n_out)
    for start in range(0, n_in + 1, per_block):
        stop = min(n_in + 1, start + per_block)
        c = coeff[start:stop]
        for s, sign in enumerate((1.0, -1.0)):
            batch = np.repeat(z, (stop - start) * n_out, axis=0).reshape(stop - start, n_out, n_out)
            batch[:, cols, cols] += sign * eps * c[:, None]
            losses[s, start:stop] = tail(batch.reshape(-1, n_out)).reshape(stop - start, n_out)
    g = (losses[0] - losses[1]) / (2.0 * eps)
    return g[:n_in], g[n_in:]


def numerical_gradients(X: Tensor2, target: Tensor2, config: ModelConfig, params: ParamStore,
                        eps: float = 1e-5) -> Dict[str, Tensor2]:
    """Finite-difference gradient of the single-clip loss for every parameter."""

    def loss(ps: ParamStore) -> float:
        probs, _ = _forward([X], config, ps)
        return mse_loss(probs, target)

    generic = [n for n in params.names() if n not in DENSE_LAYERS]
    grads = finite_diff_grad(loss, params, eps, names=generic)

    _, cache = _forward([X], config, params)
    v, z1, a1, s, _ = cache[-1]
    p = head_view(params)

    def tail_from_z2(z2):
        return _rowwise_mse(softmax_row(sigmoid(z2) @ p["W3"] + p["b3"]), target)

    def tail_from_z1(z1b):
        return tail_from_z2(relu(z1b) @ p["W2"] + p["b2"])

    z2 = a1 @ p["W2"] + p["b2"]
    grads["head.W2"], grads["head.b2"] = dense_layer_fd(a1, z2, tail_from_z2, eps)
    grads["head.W1"], grads["head.b1"] = dense_layer_fd(v, z1, tail_from_z1, eps)
    return grads


def _draw_instance(config: ModelConfig, rng: SeededRng, base: Optional[ParamStore]):
    if base is None:
        params = init_params(config, rng.split(), dtype=np.float64)
        # non-zero biases so every term of the backward pass is exercised
        for name in params.names():
            if ".b" in name:
                shape = params[name].shape
                params.set_value(name, 0.1 * rng.normal(params[name].size).reshape(shape))
    else:
        params = base.copy(np.float64)
    X = rng.normal(config.frames * config.input_dim).reshape(config.frames, config.input_dim)
    return params, X


def check_model_gradients(config: ModelConfig, seed: int, eps: float = 1e-5,
                          label: Optional[int] = None,
                          params: Optional[ParamStore] = None,
                          kink_margin: float = 1e-4,
                          max_draws: int = 50) -> Dict[str, float]:
    """Per-parameter max relative error between analytic and numeric gradients.

    Runs in float64 with dropout disabled on a random clip drawn from ``seed``.
    Instances with a relu pre-activation within ``kink_margin`` of zero are
    redrawn: a central difference straddling the kink is not a derivative.
    """
    rng = SeededRng(seed)
    for _ in range(max_draws):
        ps, X = _draw_instance(config, rng, params)
        _, cache = _forward([X], config, ps)
        if np.min(np.abs(cache[-1][1])) >= kink_margin:
            break
    else:
        raise RuntimeError(f"no kink-free instance in {max_draws} draws")
    if label is None:
        label = rng.randbelow(2)
    target = one_hot(label, np.float64)
    loss_and_grad([X], target, config, ps)
    numeric = numerical_gradients(X, target, config, ps, eps)
    return {n: relative_error(ps.grad(n), numeric[n]) for n in ps.names()}


def worst(errors: Dict[str, float]) -> float:
    return max(errors.values())


__all__: Iterable[str] = (
    "check_model_gradients",
    "dense_layer_fd",
    "numerical_gradients",
    "relative_error",
    "worst",
)
