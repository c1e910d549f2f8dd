"""Dense 2-D numeric primitives, seeded randomness and a finite-difference oracle.

Every vector and matrix in the package is a 2-D numpy array (a "Tensor2").
Parameters and activations are float32; matrix products accumulate in float64
before rounding back.  Passing float64 tensors keeps everything in float64,
which the gradient checker relies on.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

Tensor2 = np.ndarray
FLOAT = np.float32

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SeededRng:
    """SplitMix64 generator.

    The state advances by the golden-ratio constant on every draw and the
    output is the standard SplitMix64 finalizer of the new state, so the
    stream depends only on the seed.  Bulk draws are vectorized but produce
    exactly the values that repeated ``next_u64`` calls would.

    ``split()`` derives an independent child generator seeded with the
    parent's next output; use it to give each parallel task its own stream.
    """

    algorithm = "splitmix64"

    def __init__(self, seed: int = 0):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return _mix64(self.state)

    def split(self) -> "SeededRng":
        return SeededRng(self.next_u64())

    def u64_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return z

    def uniform(self, n: int) -> np.ndarray:
        """``n`` float64 values in [0, 1) built from the top 53 bits."""
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        """Standard normal draws via Box-Muller on consecutive uniform pairs."""
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]

    def randbelow(self, n: int) -> int:
        return (self.next_u64() * n) >> 64

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        out = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def as_tensor2(x, dtype=FLOAT) -> Tensor2:
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D tensor, got shape {arr.shape}")
    return arr


def check_finite(x: Tensor2, what: str = "tensor") -> Tensor2:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    out_dtype = np.result_type(a.dtype, b.dtype)
    if out_dtype == np.float64:
        return a @ b
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(out_dtype)


def softmax_row(x: Tensor2) -> Tensor2:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relu(x: Tensor2) -> Tensor2:
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def sigmoid(x: Tensor2) -> Tensor2:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def tanh(x: Tensor2) -> Tensor2:
    return np.tanh(x)


def mse_loss(pred: Tensor2, target: Tensor2) -> float:
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def dropout_mask(shape: Tuple[int, int], rate: float, rng: SeededRng, dtype=FLOAT) -> Tensor2:
    """Inverted-dropout multiplier: 0 for dropped units, 1/(1-rate) for kept ones."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    n = shape[0] * shape[1]
    keep = rng.uniform(n).reshape(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def dropout(x: Tensor2, rate: float, rng: SeededRng, training: bool) -> Tensor2:
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng, x.dtype)


def glorot_init(rows: int, cols: int, rng: SeededRng, dtype=FLOAT) -> Tensor2:
    if rows < 1 or cols < 1:
        raise ParameterError(f"glorot_init needs positive dims, got {rows}x{cols}")
    limit = math.sqrt(6.0 / (rows + cols))
    u = rng.uniform(rows * cols).reshape(rows, cols)
    return ((2.0 * u - 1.0) * limit).astype(dtype)


class ParamStore:
    """Ordered mapping of parameter name to a (value, gradient) pair."""

    def __init__(self):
        self._entries: "OrderedDict[str, list]" = OrderedDict()

    def add(self, name: str, value: Tensor2) -> None:
        if name in self._entries:
            raise ParameterError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(as_tensor2(value, dtype=np.asarray(value).dtype))
        self._entries[name] = [value, np.zeros_like(value)]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor2:
        return self._entries[name][0]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[Tuple[str, Tensor2]]:
        for name, (value, _) in self._entries.items():
            yield name, value

    def set_value(self, name: str, value: Tensor2) -> None:
        old = self._entries[name][0]
        if value.shape != old.shape:
            raise DimensionError(f"{name}: new value {value.shape} vs {old.shape}")
        self._entries[name][0] = np.ascontiguousarray(value)

    def grad(self, name: str) -> Tensor2:
        return self._entries[name][1]

    def set_grad(self, name: str, grad: Tensor2) -> None:
        value = self._entries[name][0]
        if grad.shape != value.shape:
            raise DimensionError(f"{name}: gradient {grad.shape} vs value {value.shape}")
        self._entries[name][1] = grad.astype(value.dtype, copy=False)

    def zero_grad(self) -> None:
        for entry in self._entries.values():
            entry[1] = np.zeros_like(entry[0])

    def copy(self, dtype=None) -> "ParamStore":
        out = ParamStore()
        for name, (value, grad) in self._entries.items():
            v = value.astype(dtype or value.dtype, copy=True)
            out._entries[name] = [v, grad.astype(v.dtype, copy=True)]
        return out

    def num_scalars(self) -> int:
        return sum(v.size for v, _ in self._entries.values())

    @property
    def dtype(self):
        for value, _ in self._entries.values():
            return value.dtype
        return np.dtype(FLOAT)


def finite_diff_grad(
    f: Callable[[ParamStore], float],
    params: ParamStore,
    epsilon: float = 1e-5,
    names: Optional[Sequence[str]] = None,
) -> Dict[str, Tensor2]:
    """Central-difference gradient of ``f`` for every scalar parameter.

    Entries are perturbed in place one at a time and restored afterwards.
    ``names`` restricts the sweep to a subset of parameters.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    grads: Dict[str, Tensor2] = {}
    for name in params.names() if names is None else names:
        value = params[name]
        flat = value.reshape(-1)
        g = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(flat[i])
            up = f(params)
            flat[i] = orig - epsilon
            lo = float(flat[i])
            down = f(params)
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"objective not finite while perturbing {name}[{i}]")
            # actual step, which differs from 2*epsilon after float32 rounding
            g[i] = (up - down) / (hi - lo)
        grads[name] = g.reshape(value.shape)
    return grads
