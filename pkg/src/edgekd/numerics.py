"""Deterministic numeric core: seeded streams, dense-layer math, and losses.

Everything computes in float64 with a pinned accumulation order (row-major,
left-to-right over the inner dimension), so repeated runs with the same seed
produce bit-identical results. BLAS-backed matmul is deliberately avoided for
that reason.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ContractError, DimensionError, ParameterError

# Smallest probability fed to log() inside the KL loss; part of the loss
# definition, not a tunable.
KL_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

class Rng:
    """Counter-based random stream keyed by (seed, stream id).

    Built on Philox, so the draw sequence for a given key is identical on
    every platform. Child streams are derived by hashing the parent stream id
    with a tag; distinct keys give non-overlapping streams, and drawing from
    one stream never advances another.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= int(seed) < 2 ** 64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream) % 2 ** 64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, tag: str) -> "Rng":
        """Derive an independent stream from this one; stable in ``tag``."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.stream.to_bytes(8, "little"))
        h.update(tag.encode("utf-8"))
        return Rng(self.seed, int.from_bytes(h.digest(), "little"))

    def normal(self, shape=None, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size=shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream:#x})"


# ---------------------------------------------------------------------------
# Tensor helpers
# ---------------------------------------------------------------------------

def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array, rejecting non-finite values."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    ensure_finite(a, name)
    return a


def as_vector(x, name: str = "x") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {a.shape}")
    ensure_finite(a, name)
    return a


def ensure_finite(a: np.ndarray, name: str = "array") -> None:
    if not np.isfinite(a).all():
        raise ContractError(f"{name} contains non-finite entries")


def matmul_acc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b with a pinned accumulation order.

    Each output element is the left-to-right running sum over the inner
    dimension, matching a naive triple loop to the last bit. Used for every
    matrix product in the package so results are reproducible bit-for-bit.
    """
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    acc = np.zeros((m, n))
    tmp = np.empty((m, n))
    for i in range(k):
        np.multiply(a[:, i, None], b[i, None, :], out=tmp)
        np.add(acc, tmp, out=acc)
    return acc


# ---------------------------------------------------------------------------
# Dense layer and activations
# ---------------------------------------------------------------------------

def dense_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = x W^T + b for W of shape (out, in), x of shape (batch, in).

    Products are accumulated left-to-right over the input dimension, then the
    bias is added, so the result matches a naive loop exactly.
    """
    w = as_matrix(weights, "weights")
    b = as_vector(bias, "bias")
    xm = as_matrix(x, "x")
    if xm.shape[1] != w.shape[1]:
        raise DimensionError(
            f"input width {xm.shape} does not match weights {w.shape}"
        )
    if b.shape[0] != w.shape[0]:
        raise DimensionError(f"bias {b.shape} does not match weights {w.shape}")
    y = matmul_acc(xm, np.ascontiguousarray(w.T)) + b
    ensure_finite(y, "dense_forward output")
    return y


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(activated: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Gradient through tanh given the activated output."""
    return grad * (1.0 - activated * activated)


# ---------------------------------------------------------------------------
# Softmax and losses
# ---------------------------------------------------------------------------

def softmax_t(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of logits / T, max-subtracted for stability."""
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_matrix(logits, "logits")
    z = z / float(temperature)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, num_classes: int, batch: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.shape != (batch,):
        raise DimensionError(f"labels shape {lab.shape} does not match batch {batch}")
    lab = lab.astype(np.int64)
    if lab.min(initial=0) < 0 or lab.max(initial=0) >= num_classes:
        bad = lab[(lab < 0) | (lab >= num_classes)][0]
        raise IndexError(f"label {bad} out of range [0, {num_classes})")
    return lab


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean over the batch of -log softmax(logits)[label]."""
    z = as_matrix(logits, "logits")
    lab = _check_labels(labels, z.shape[1], z.shape[0])
    # log-softmax via the max-subtracted form; no probability clamping needed
    zs = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(zs).sum(axis=1))
    picked = zs[np.arange(z.shape[0]), lab]
    return float(np.mean(log_norm - picked))


def softmax_ce_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Cross-entropy and its gradient w.r.t. the logits (batch-mean scaled)."""
    z = as_matrix(logits, "logits")
    lab = _check_labels(labels, z.shape[1], z.shape[0])
    p = softmax_t(z, 1.0)
    zs = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(zs).sum(axis=1))
    loss = float(np.mean(log_norm - zs[np.arange(z.shape[0]), lab]))
    grad = p.copy()
    grad[np.arange(z.shape[0]), lab] -= 1.0
    grad /= z.shape[0]
    return loss, grad


def _check_rows_normalized(p: np.ndarray, name: str) -> None:
    if p.min(initial=0.0) < 0:
        raise ContractError(f"{name} has negative entries")
    sums = p.sum(axis=1)
    if np.abs(sums - 1.0).max(initial=0.0) > 1e-9:
        raise ContractError(f"{name} rows do not sum to 1 (max deviation "
                            f"{np.abs(sums - 1.0).max():.3e})")


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over the batch of sum_j p (log p - log q).

    Rows must already be probability vectors (sum 1 within 1e-9); they are
    renormalized exactly before the divergence is taken. Terms with p == 0
    contribute zero, and q is clamped below at 1e-12 inside the log.
    """
    pm = as_matrix(p, "p")
    qm = as_matrix(q, "q")
    if pm.shape != qm.shape:
        raise DimensionError(f"p shape {pm.shape} does not match q shape {qm.shape}")
    _check_rows_normalized(pm, "p")
    _check_rows_normalized(qm, "q")
    pm = pm / pm.sum(axis=1, keepdims=True)
    qm = qm / qm.sum(axis=1, keepdims=True)
    mask = pm > 0
    terms = np.zeros_like(pm)
    terms[mask] = pm[mask] * (np.log(pm[mask]) - np.log(np.maximum(qm[mask], KL_CLAMP)))
    return float(np.mean(terms.sum(axis=1)))


# ---------------------------------------------------------------------------
# Optimizer and gradient oracle
# ---------------------------------------------------------------------------

def sgd_step(params, grads, lr: float):
    """theta <- theta - lr * grad, elementwise, returning a new collection."""
    if not lr >= 0:
        raise ParameterError(f"lr must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise DimensionError(
            f"{len(params)} parameter tensors vs {len(grads)} gradient tensors"
        )
    out = []
    for i, (theta, g) in enumerate(zip(params, grads)):
        if theta.shape != g.shape:
            raise DimensionError(
                f"parameter {i} shape {theta.shape} does not match gradient {g.shape}"
            )
        out.append(theta - lr * g)
    return out


def grad_check(loss_fn, params, analytic, eps: float = 1e-5) -> float:
    """Max relative error between central finite differences and ``analytic``.

    ``loss_fn`` maps a parameter collection to a scalar. The relative error per
    coordinate is |fd - g| / max(1e-8, |fd| + |g|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ParameterError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    worst = 0.0
    work = [np.array(t, dtype=np.float64, copy=True) for t in params]
    for ti, tensor in enumerate(work):
        flat = tensor.reshape(-1)
        gflat = np.asarray(analytic[ti]).reshape(-1)
        for j in range(flat.shape[0]):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(work)
            flat[j] = orig - eps
            down = loss_fn(work)
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ContractError("loss_fn returned a non-finite value")
            fd = (up - down) / (2.0 * eps)
            err = abs(fd - gflat[j]) / max(1e-8, abs(fd) + abs(gflat[j]))
            worst = max(worst, err)
    return worst
