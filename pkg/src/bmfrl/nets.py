"""Dense-network numeric kernel: forward pass, reverse-mode gradients, SGD/Adam.

All math is float64 over flat parameter vectors, which keeps checkpoints,
finite-difference checks and optimizer state trivial. Inputs may be a single
vector or a batch (rows); batched backward sums parameter gradients over rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity", "softmax_out")


class ShapeError(ValueError):
    """An input, gradient or parameter vector does not match the net layout."""

    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: expected size {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class GradientError(ValueError):
    """A gradient or update contains non-finite entries."""


@dataclass(frozen=True)
class NetDef:
    """MLP topology. ``softmax_out`` means relu hidden layers + softmax output."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least 2 layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, want one of {ACTIVATIONS}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes, self.layer_sizes[1:]))


@dataclass
class NetParams:
    """Flat float64 parameter vector bound to a :class:`NetDef`."""

    net_def: NetDef
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.net_def.n_params,):
            raise ShapeError("params", self.net_def.n_params, self.values.shape)

    def copy(self) -> "NetParams":
        return NetParams(self.net_def, self.values.copy())


@dataclass
class GradTape:
    """d(loss)/d(params) aligned with NetParams.values, plus d(loss)/d(input)."""

    values: np.ndarray
    input_grad: np.ndarray


def init_params(net_def: NetDef, rng: np.random.Generator) -> NetParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    chunks = []
    for nin, nout in zip(net_def.layer_sizes, net_def.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (nin + nout))
        chunks.append(rng.uniform(-bound, bound, size=nin * nout))
        chunks.append(np.zeros(nout))
    return NetParams(net_def, np.concatenate(chunks))


def zeros_params(net_def: NetDef) -> NetParams:
    return NetParams(net_def, np.zeros(net_def.n_params))


def _layers(params: NetParams):
    """Yield (W, b) views into the flat vector, in layer order."""
    v = params.values
    off = 0
    for nin, nout in zip(params.net_def.layer_sizes, params.net_def.layer_sizes[1:]):
        w = v[off:off + nin * nout].reshape(nin, nout)
        off += nin * nout
        b = v[off:off + nout]
        off += nout
        yield w, b


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_rows(x, n_expected: int, what: str):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    rows = x[None, :] if squeeze else x
    if rows.ndim != 2 or rows.shape[1] != n_expected:
        raise ShapeError(what, n_expected, x.shape)
    return rows, squeeze


def _forward_pass(params: NetParams, rows: np.ndarray):
    """Return (preacts list, acts list); acts[-1] is the output."""
    net_def = params.net_def
    n_layers = len(net_def.layer_sizes) - 1
    hidden = "relu" if net_def.activation in ("relu", "softmax_out") else net_def.activation
    zs, hs = [], [rows]
    h = rows
    for i, (w, b) in enumerate(_layers(params)):
        z = h @ w + b
        zs.append(z)
        if i < n_layers - 1:
            if hidden == "relu":
                h = np.maximum(z, 0.0)
            elif hidden == "tanh":
                h = np.tanh(z)
            else:
                h = z
        else:
            h = _softmax(z) if net_def.activation == "softmax_out" else z
        hs.append(h)
    return zs, hs


def forward(params: NetParams, x) -> np.ndarray:
    """Evaluate the net; pure with respect to ``params``."""
    rows, squeeze = _as_rows(x, params.net_def.n_in, "input")
    _, hs = _forward_pass(params, rows)
    out = hs[-1]
    return out[0] if squeeze else out


def backward(params: NetParams, x, output_grad) -> GradTape:
    """Reverse-mode gradient of the scalar loss whose output-gradient is given.

    For batched inputs the parameter gradient is summed over rows while the
    input gradient keeps one row per input row.
    """
    rows, squeeze = _as_rows(x, params.net_def.n_in, "input")
    gout, gsq = _as_rows(output_grad, params.net_def.n_out, "output_grad")
    if gout.shape[0] != rows.shape[0]:
        raise ShapeError("output_grad rows", rows.shape[0], gout.shape[0])

    net_def = params.net_def
    n_layers = len(net_def.layer_sizes) - 1
    hidden = "relu" if net_def.activation in ("relu", "softmax_out") else net_def.activation
    zs, hs = _forward_pass(params, rows)
    ws = [w for w, _ in _layers(params)]

    grad = np.zeros_like(params.values)
    # gradient slices mirror the flat layout
    offs = []
    off = 0
    for nin, nout in zip(net_def.layer_sizes, net_def.layer_sizes[1:]):
        offs.append((off, nin, nout))
        off += nin * nout + nout

    if net_def.activation == "softmax_out":
        y = hs[-1]
        dz = y * (gout - (gout * y).sum(axis=1, keepdims=True))
    else:
        dz = gout

    for i in range(n_layers - 1, -1, -1):
        o, nin, nout = offs[i]
        grad[o:o + nin * nout] = (hs[i].T @ dz).ravel()
        grad[o + nin * nout:o + nin * nout + nout] = dz.sum(axis=0)
        dh = dz @ ws[i].T
        if i > 0:
            if hidden == "relu":
                dz = dh * (zs[i - 1] > 0.0)
            elif hidden == "tanh":
                dz = dh * (1.0 - hs[i] ** 2)
            else:
                dz = dh
        else:
            dz = dh  # gradient w.r.t. the input
    input_grad = dz[0] if squeeze else dz
    return GradTape(values=grad, input_grad=input_grad)


def _check_finite(g: np.ndarray, what: str):
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise GradientError(f"non-finite {what} at index {int(bad[0])} (of {bad.size} bad entries)")


def sgd_step(params: NetParams, tape: GradTape, lr: float) -> NetParams:
    g = tape.values
    if g.shape != params.values.shape:
        raise ShapeError("gradient", params.values.shape, g.shape)
    _check_finite(g, "gradient")
    return NetParams(params.net_def, params.values - lr * g)


@dataclass
class AdamState:
    """First/second moments; persisted across steps."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_params(cls, params: NetParams) -> "AdamState":
        n = params.values.shape[0]
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params: NetParams, tape: GradTape, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> NetParams:
    """Bias-corrected Adam update; mutates ``state``."""
    g = tape.values
    if g.shape != params.values.shape:
        raise ShapeError("gradient", params.values.shape, g.shape)
    _check_finite(g, "gradient")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * g
    state.v = beta2 * state.v + (1.0 - beta2) * g * g
    mhat = state.m / (1.0 - beta1 ** state.t)
    vhat = state.v / (1.0 - beta2 ** state.t)
    return NetParams(params.net_def, params.values - lr * mhat / (np.sqrt(vhat) + eps))
