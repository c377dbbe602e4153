"""Dense networks with hand-written backpropagation, Adam and OU noise.

Parameters of a network live in one flat float64 vector; per-layer weights
and biases are views into it. Optimiser state, soft target updates and
checkpoints all work on that vector directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from vecnoma.errors import ContractViolation, TrainingDivergenceError

ACTIVATIONS = ("relu", "sigmoid", "identity")
CHECKPOINT_MAGIC = "vecnoma-densenet v1"
_CHUNK = 16384


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class DenseNet:
    """Fully connected network, ``x @ W + b`` per layer, batch along rows."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str],
                 rng: np.random.Generator | None = None, final_scale: float = 3e-3,
                 params: np.ndarray | None = None):
        sizes = [int(s) for s in sizes]
        activations = list(activations)
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise ContractViolation("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ContractViolation(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = activations
        self._shapes = [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]
        n = sum(i * o + o for i, o in self._shapes)
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ContractViolation(f"expected {n} parameters, got {params.shape}")
            self.params = params.copy()
        else:
            self.params = np.zeros(n)
        self.weights, self.biases = self._views(self.params)
        if params is None and rng is not None:
            self._init(rng, final_scale)

    def _views(self, flat: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        ws, bs = [], []
        pos = 0
        for i, o in self._shapes:
            ws.append(flat[pos:pos + i * o].reshape(i, o))
            pos += i * o
            bs.append(flat[pos:pos + o])
            pos += o
        return ws, bs

    def _init(self, rng: np.random.Generator, final_scale: float) -> None:
        last = len(self._shapes) - 1
        for k, (fan_in, fan_out) in enumerate(self._shapes):
            bound = final_scale if k == last else 1.0 / np.sqrt(fan_in)
            self.weights[k][...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.biases[k][...] = rng.uniform(-bound, bound, size=fan_out)

    @property
    def num_params(self) -> int:
        return self.params.size

    def copy(self) -> "DenseNet":
        return DenseNet(self.sizes, self.activations, params=self.params)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns the output and the per-layer cache needed by ``backward``.

        The cache holds the network input followed by each layer's activated output.
        """
        a = np.asarray(x, dtype=np.float64)
        squeeze = a.ndim == 1
        if squeeze:
            a = a[None, :]
        if a.shape[1] != self.sizes[0]:
            raise ContractViolation(f"input width {a.shape[1]} != {self.sizes[0]}")
        cache = [a]
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ W
            z += b
            if act == "relu":
                np.maximum(z, 0.0, out=z)
            elif act == "sigmoid":
                z = _sigmoid(z)
            a = z
            cache.append(a)
        return (a[0] if squeeze else a), cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list[np.ndarray], grad_out: np.ndarray,
                 need_params: bool = True) -> tuple[np.ndarray | None, np.ndarray]:
        """Reverse-mode gradients of ``sum(grad_out * output)``.

        Returns the flat parameter gradient (None when ``need_params`` is
        false) and the gradient with respect to the input batch.
        """
        delta = np.asarray(grad_out, dtype=np.float64)
        if delta.ndim == 1:
            delta = delta[None, :]
        grads = np.empty_like(self.params) if need_params else None
        gws, gbs = self._views(grads) if need_params else (None, None)
        for k in range(len(self._shapes) - 1, -1, -1):
            out = cache[k + 1]
            act = self.activations[k]
            if act == "relu":
                delta = delta * (out > 0)
            elif act == "sigmoid":
                delta = delta * out * (1.0 - out)
            if need_params:
                np.matmul(cache[k].T, delta, out=gws[k])
                gbs[k][...] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
        return grads, delta


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    return net.forward(x)


def backward(net: DenseNet, cache: list[np.ndarray], grad_out: np.ndarray):
    return net.backward(cache, grad_out)


@dataclass
class AdamState:
    size: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    _scratch: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)
        self._scratch = np.empty(min(self.size, _CHUNK))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Bias-corrected Adam descent step, applied to ``params`` in place.

    Uses the folded form lr_t * m / (sqrt(v) + eps_t) with
    lr_t = lr * sqrt(1 - b2^t) / (1 - b1^t) and eps_t = eps * sqrt(1 - b2^t),
    which equals lr * m_hat / (sqrt(v_hat) + eps).
    """
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ContractViolation("Adam state, parameters and gradients must share a shape")
    if not np.isfinite(grads).all():
        raise TrainingDivergenceError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c2 = np.sqrt(1.0 - b2**state.step)
    lr_t = state.lr * c2 / (1.0 - b1**state.step)
    eps_t = state.eps * c2
    # chunked so the working set stays in cache; elementwise, so results are unchanged
    for lo in range(0, params.size, _CHUNK):
        hi = lo + _CHUNK
        m, v, g, p = state.m[lo:hi], state.v[lo:hi], grads[lo:hi], params[lo:hi]
        buf = state._scratch[:m.size]
        m *= b1
        np.multiply(g, 1.0 - b1, out=buf)
        m += buf
        v *= b2
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v += buf
        np.sqrt(v, out=buf)
        buf += eps_t
        np.divide(m, buf, out=buf)
        buf *= lr_t
        p -= buf
    return params


def soft_update(target: np.ndarray, online: np.ndarray, tau: float,
                scratch: np.ndarray | None = None) -> np.ndarray:
    """target <- tau * online + (1 - tau) * target, in place."""
    if target.shape != online.shape:
        raise ContractViolation("target and online parameter shapes differ")
    if tau == 1.0:
        target[...] = online
        return target
    if scratch is None or scratch.size < min(target.size, _CHUNK):
        scratch = np.empty(min(target.size, _CHUNK))
    for lo in range(0, target.size, _CHUNK):
        t, o = target[lo:lo + _CHUNK], online[lo:lo + _CHUNK]
        buf = scratch[:t.size]
        np.subtract(o, t, out=buf)
        buf *= tau
        t += buf
    return target


@dataclass
class OuState:
    x: np.ndarray
    theta: float = 0.15
    sigma: float = 0.02

    @classmethod
    def zeros(cls, dim: int, theta: float = 0.15, sigma: float = 0.02) -> "OuState":
        return cls(np.zeros(dim), theta, sigma)

    def reset(self) -> None:
        self.x = np.zeros_like(self.x)


def ou_sample(state: OuState, rng: np.random.Generator) -> np.ndarray:
    """One unit-time Ornstein-Uhlenbeck step towards zero mean."""
    state.x = state.x - state.theta * state.x + state.sigma * rng.standard_normal(state.x.shape)
    return state.x.copy()


def save_checkpoint(path: str | Path, net: DenseNet, meta: dict[str, float] | None = None) -> None:
    """Plain-text checkpoint: header, layer sizes, activations, then parameters as hex floats.

    Parameters are written layer by layer, weights row-major followed by biases,
    which is exactly the flat parameter order, so loading round-trips bit-exactly.
    """
    lines = [CHECKPOINT_MAGIC,
             "sizes " + " ".join(str(s) for s in net.sizes),
             "activations " + " ".join(net.activations)]
    for key, value in sorted((meta or {}).items()):
        lines.append(f"meta {key} {float(value).hex()}")
    lines.append(f"params {net.num_params}")
    lines.extend(float(v).hex() for v in net.params)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> tuple[DenseNet, dict[str, float]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    sizes = [int(s) for s in lines[1].split()[1:]]
    activations = lines[2].split()[1:]
    meta = {}
    i = 3
    while lines[i].startswith("meta "):
        _, key, value = lines[i].split()
        meta[key] = float.fromhex(value)
        i += 1
    count = int(lines[i].split()[1])
    values = np.array([float.fromhex(v) for v in lines[i + 1:i + 1 + count]])
    if values.size != count:
        raise ValueError(f"{path}: truncated parameter list")
    return DenseNet(sizes, activations, params=values), meta
