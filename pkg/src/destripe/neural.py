"""Minimal numeric core: GRU cell, bidirectional GRU layer, Adam, MSE loss,
and a central finite-difference gradient checker.

Everything is plain numpy. Conventions:

- weights ``W`` are (hidden, input), ``U`` are (hidden, hidden), biases are
  (hidden,); pre-activations are ``x @ W.T + h @ U.T + b``;
- cell inputs are single vectors ``(d,)`` or batches ``(B, d)``; sequences are
  ``(m, d)`` or ``(m, B, d)`` with the scan running over the first axis;
- parameter gradients for batched inputs are summed over the batch, matching
  a single deterministic update per step.

Gate equations (update gate z, reset gate r, candidate h~):

    z  = sigmoid(W_z x + U_z h_prev + b_z)
    r  = sigmoid(W_r x + U_r h_prev + b_r)
    h~ = tanh(W_h x + U_h (r * h_prev) + b_h)
    h  = (1 - z) * h_prev + z * h~

so z = 1 opens the update gate fully (h == h~).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np


class DivergenceError(ArithmeticError):
    """Raised when a numeric step encounters non-finite values."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument on both branches, so no overflow
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------------------
# GRU cell


@dataclass
class GruParams:
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    def named(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
            yield prefix + name, getattr(self, name)


def init_gru_params(
    input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float32
) -> GruParams:
    """Scaled-uniform init: weights U(-1/sqrt(H), 1/sqrt(H)), biases zero."""
    bound = 1.0 / np.sqrt(hidden_size)

    def w(rows, cols):
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    def b():
        return np.zeros(hidden_size, dtype=dtype)

    return GruParams(
        w_z=w(hidden_size, input_size), u_z=w(hidden_size, hidden_size), b_z=b(),
        w_r=w(hidden_size, input_size), u_r=w(hidden_size, hidden_size), b_r=b(),
        w_h=w(hidden_size, input_size), u_h=w(hidden_size, hidden_size), b_h=b(),
    )


def zeros_like_gru(p: GruParams) -> GruParams:
    return GruParams(**{name: np.zeros_like(arr) for name, arr in p.named()})


@dataclass
class GruCache:
    """Forward intermediates needed for the exact backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_tilde: np.ndarray
    rh: np.ndarray
    squeezed: bool


def _as_batch(v: np.ndarray) -> tuple[np.ndarray, bool]:
    v = np.asarray(v)
    if v.ndim == 1:
        return v[np.newaxis, :], True
    if v.ndim == 2:
        return v, False
    raise ValueError(f"expected a vector or a batch of vectors, got shape {v.shape}")


def gru_cell_forward(
    p: GruParams, x: np.ndarray, h_prev: np.ndarray
) -> tuple[np.ndarray, GruCache]:
    """One GRU step. Accepts (d,)/(H,) vectors or (B, d)/(B, H) batches."""
    x2, sq_x = _as_batch(x)
    h2, sq_h = _as_batch(h_prev)
    if x2.shape[1] != p.input_size or h2.shape[1] != p.hidden_size:
        raise ValueError(
            f"shape mismatch: x {x2.shape}, h_prev {h2.shape} for "
            f"d={p.input_size}, H={p.hidden_size}"
        )
    if not (np.all(np.isfinite(x2)) and np.all(np.isfinite(h2))):
        raise DivergenceError("non-finite GRU cell input")
    z = sigmoid(x2 @ p.w_z.T + h2 @ p.u_z.T + p.b_z)
    r = sigmoid(x2 @ p.w_r.T + h2 @ p.u_r.T + p.b_r)
    rh = r * h2
    h_tilde = np.tanh(x2 @ p.w_h.T + rh @ p.u_h.T + p.b_h)
    h = (1.0 - z) * h2 + z * h_tilde
    squeezed = sq_x and sq_h
    cache = GruCache(x=x2, h_prev=h2, z=z, r=r, h_tilde=h_tilde, rh=rh, squeezed=squeezed)
    return (h[0] if squeezed else h), cache


def gru_cell_backward(
    p: GruParams, cache: GruCache, grad_h: np.ndarray
) -> tuple[np.ndarray, np.ndarray, GruParams]:
    """Exact reverse-mode gradients of one GRU step.

    Returns (grad_x, grad_h_prev, grad_params); parameter gradients are summed
    over the batch dimension when the forward input was batched.
    """
    gh, _ = _as_batch(grad_h)
    if gh.shape != cache.z.shape:
        raise ValueError(f"grad_h shape {gh.shape} does not match cached {cache.z.shape}")
    x, h_prev, z, r, h_tilde, rh = (
        cache.x, cache.h_prev, cache.z, cache.r, cache.h_tilde, cache.rh,
    )
    dz = gh * (h_tilde - h_prev)
    dh_tilde = gh * z
    dh_prev = gh * (1.0 - z)

    da_h = dh_tilde * (1.0 - h_tilde * h_tilde)
    g_w_h = da_h.T @ x
    g_u_h = da_h.T @ rh
    g_b_h = da_h.sum(axis=0)
    drh = da_h @ p.u_h
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    da_r = dr * r * (1.0 - r)
    g_w_r = da_r.T @ x
    g_u_r = da_r.T @ h_prev
    g_b_r = da_r.sum(axis=0)
    dh_prev = dh_prev + da_r @ p.u_r

    da_z = dz * z * (1.0 - z)
    g_w_z = da_z.T @ x
    g_u_z = da_z.T @ h_prev
    g_b_z = da_z.sum(axis=0)
    dh_prev = dh_prev + da_z @ p.u_z

    dx = da_h @ p.w_h + da_r @ p.w_r + da_z @ p.w_z
    grads = GruParams(
        w_z=g_w_z, u_z=g_u_z, b_z=g_b_z,
        w_r=g_w_r, u_r=g_u_r, b_r=g_b_r,
        w_h=g_w_h, u_h=g_u_h, b_h=g_b_h,
    )
    if cache.squeezed:
        return dx[0], dh_prev[0], grads
    return dx, dh_prev, grads


# ---------------------------------------------------------------------------
# Directional and bidirectional sequence scans


def _accumulate(into: GruParams, delta: GruParams) -> None:
    for (_, dst), (_, src) in zip(into.named(), delta.named()):
        dst += src


def gru_sequence_forward(
    p: GruParams, seq: np.ndarray
) -> tuple[np.ndarray, list[GruCache]]:
    """Scan a (m, B, d) sequence from a zero initial state; returns (m, B, H) states."""
    m, batch, _ = seq.shape
    h = np.zeros((batch, p.hidden_size), dtype=seq.dtype)
    states = np.empty((m, batch, p.hidden_size), dtype=seq.dtype)
    caches: list[GruCache] = []
    for t in range(m):
        h, cache = gru_cell_forward(p, seq[t], h)
        states[t] = h
        caches.append(cache)
    return states, caches


def gru_sequence_backward(
    p: GruParams, caches: list[GruCache], grad_states: np.ndarray
) -> tuple[np.ndarray, GruParams]:
    """Backpropagation through time for one directional scan."""
    m = len(caches)
    grad_seq = np.empty((m,) + caches[0].x.shape, dtype=grad_states.dtype)
    grads = GruParams(**{name: np.zeros_like(arr) for name, arr in p.named()})
    carry = np.zeros_like(grad_states[0])
    for t in range(m - 1, -1, -1):
        dx, carry, step_grads = gru_cell_backward(p, caches[t], grad_states[t] + carry)
        grad_seq[t] = dx
        _accumulate(grads, step_grads)
    return grad_seq, grads


@dataclass
class BiGruLayerParams:
    """Independent forward/backward GRUs plus the output projection."""

    fwd: GruParams
    bwd: GruParams
    proj: np.ndarray
    proj_bias: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @property
    def output_size(self) -> int:
        return self.proj.shape[0]

    def named(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        yield from self.fwd.named(prefix + "fwd.")
        yield from self.bwd.named(prefix + "bwd.")
        yield prefix + "proj", self.proj
        yield prefix + "proj_bias", self.proj_bias


def init_bigru_layer(
    input_size: int,
    hidden_size: int,
    output_size: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> BiGruLayerParams:
    fwd = init_gru_params(input_size, hidden_size, rng, dtype)
    bwd = init_gru_params(input_size, hidden_size, rng, dtype)
    bound = 1.0 / np.sqrt(2 * hidden_size)
    proj = rng.uniform(-bound, bound, size=(output_size, 2 * hidden_size)).astype(dtype)
    return BiGruLayerParams(
        fwd=fwd, bwd=bwd, proj=proj, proj_bias=np.zeros(output_size, dtype=dtype)
    )


@dataclass
class BiGruCache:
    caches_f: list[GruCache]
    caches_b: list[GruCache]
    concat: np.ndarray
    squeezed: bool


def _as_sequence(seq: np.ndarray) -> tuple[np.ndarray, bool]:
    seq = np.asarray(seq)
    if seq.ndim == 2:
        return seq[:, np.newaxis, :], True
    if seq.ndim == 3:
        return seq, False
    raise ValueError(f"expected (m, d) or (m, B, d) sequence, got shape {seq.shape}")


def bigru_forward(
    layer: BiGruLayerParams, seq: np.ndarray, return_cache: bool = False
):
    """Both scans from zero states; per-position projection of the joint state.

    ``out[i] = proj @ concat(h_fwd[i], h_bwd[i]) + bias``, so every output
    position sees the whole sequence.
    """
    seq3, squeezed = _as_sequence(seq)
    if seq3.shape[0] < 1:
        raise ValueError("empty sequence")
    if seq3.shape[2] != layer.fwd.input_size:
        raise ValueError(
            f"sequence vectors have length {seq3.shape[2]}, layer expects "
            f"{layer.fwd.input_size}"
        )
    h_f, caches_f = gru_sequence_forward(layer.fwd, seq3)
    h_b_rev, caches_b = gru_sequence_forward(layer.bwd, seq3[::-1])
    concat = np.concatenate([h_f, h_b_rev[::-1]], axis=-1)
    out = concat @ layer.proj.T + layer.proj_bias
    if squeezed:
        out = out[:, 0, :]
    if not return_cache:
        return out
    return out, BiGruCache(caches_f=caches_f, caches_b=caches_b, concat=concat, squeezed=squeezed)


def bigru_backward(
    layer: BiGruLayerParams, cache: BiGruCache, grad_out: np.ndarray
) -> tuple[np.ndarray, BiGruLayerParams]:
    """Gradients of a bigru_forward call w.r.t. its input sequence and parameters."""
    if cache.squeezed:
        grad_out = np.asarray(grad_out)[:, np.newaxis, :]
    m, batch, out_size = grad_out.shape
    hidden = layer.hidden_size
    flat_g = grad_out.reshape(m * batch, out_size)
    flat_c = cache.concat.reshape(m * batch, 2 * hidden)
    g_proj = flat_g.T @ flat_c
    g_bias = flat_g.sum(axis=0)
    g_concat = grad_out @ layer.proj
    g_f, g_b = g_concat[..., :hidden], g_concat[..., hidden:]
    grad_seq_f, grads_f = gru_sequence_backward(layer.fwd, cache.caches_f, g_f)
    grad_seq_b_rev, grads_b = gru_sequence_backward(layer.bwd, cache.caches_b, g_b[::-1])
    grad_seq = grad_seq_f + grad_seq_b_rev[::-1]
    if cache.squeezed:
        grad_seq = grad_seq[:, 0, :]
    layer_grads = BiGruLayerParams(fwd=grads_f, bwd=grads_b, proj=g_proj, proj_bias=g_bias)
    return grad_seq, layer_grads


# ---------------------------------------------------------------------------
# Loss and optimizer


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error in [0, 1] pixel units, with its gradient w.r.t. pred."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed like the parameter dict they track."""

    learning_rate: float
    beta1: float
    beta2: float
    eps: float
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam(
    params: dict[str, np.ndarray],
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        t=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]
) -> None:
    """One in-place bias-corrected Adam update over the whole parameter dict."""
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {key!r}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for key, p in params.items():
        g = grads[key]
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    max_rel_error: float
    worst: str
    per_param: dict[str, float]

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} "
            f"(worst: {self.worst}, tolerance {self.tolerance:.1e})"
        )


def gradient_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    tolerance: float,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must recompute the scalar loss from the live ``params`` arrays
    (they are perturbed in place and restored). Use float64 parameters;
    float32 has too little headroom for the default step.
    """
    per_param: dict[str, float] = {}
    max_rel = 0.0
    worst = ""
    for name, arr in params.items():
        flat = arr.reshape(-1)
        ana = analytic[name].reshape(-1)
        worst_here = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            loss_plus = loss_fn()
            flat[i] = orig - step
            loss_minus = loss_fn()
            flat[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            denom = max(abs(ana[i]) + abs(numeric), 1e-4)
            rel = abs(ana[i] - numeric) / denom
            if rel > worst_here:
                worst_here = rel
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{i}]"
        per_param[name] = worst_here
    return GradCheckReport(
        tolerance=tolerance, step=step, max_rel_error=max_rel, worst=worst, per_param=per_param
    )


def check_gru_cell(
    p: GruParams,
    x: np.ndarray,
    h_prev: np.ndarray,
    tolerance: float = 1e-5,
    step: float = 1e-5,
) -> GradCheckReport:
    """Gradient-check one cell step through the loss 0.5*sum(h^2).

    Checks all nine parameter tensors plus the inputs x and h_prev.
    """
    params = dict(p.named())
    params["x"] = x
    params["h_prev"] = h_prev

    def loss_fn() -> float:
        h, _ = gru_cell_forward(p, x, h_prev)
        return 0.5 * float(np.sum(h * h))

    h, cache = gru_cell_forward(p, x, h_prev)
    dx, dh_prev, grads = gru_cell_backward(p, cache, h)
    analytic = dict(grads.named())
    analytic["x"] = dx
    analytic["h_prev"] = dh_prev
    return gradient_check(loss_fn, params, analytic, tolerance, step)


def check_bigru_layer(
    layer: BiGruLayerParams,
    seq: np.ndarray,
    tolerance: float = 1e-5,
    step: float = 1e-5,
) -> GradCheckReport:
    """Gradient-check a bidirectional layer through the loss 0.5*sum(out^2)."""
    params = dict(layer.named())
    params["seq"] = seq

    def loss_fn() -> float:
        out = bigru_forward(layer, seq)
        return 0.5 * float(np.sum(out * out))

    out, cache = bigru_forward(layer, seq, return_cache=True)
    grad_seq, grads = bigru_backward(layer, cache, out)
    analytic = dict(grads.named())
    analytic["seq"] = grad_seq
    return gradient_check(loss_fn, params, analytic, tolerance, step)
