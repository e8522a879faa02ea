"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The active variant is chosen once at import time from the STREAMMEM_NUMBA
environment variable: "0"/"false"/"off" forces the numpy path, anything else
(or an unset variable) uses numba when it is importable. Both variants are
always exported so benchmarks and tests can compare them directly.

All kernels take float64 C-contiguous arrays and are deterministic for fixed
inputs within a variant.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_wants_numba() -> bool:
    flag = os.environ.get("STREAMMEM_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    return NUMBA_AVAILABLE


def attention_core_numpy(qp: np.ndarray, kp: np.ndarray, vp: np.ndarray,
                         heads: int) -> np.ndarray:
    """Multi-head scaled dot-product attention on already-projected tensors.

    qp: (n_q, d), kp/vp: (n_kv, d). Returns the concatenated per-head
    context (n_q, d); the output projection is applied by the caller.
    """
    n_q, d = qp.shape
    dh = d // heads
    scale = 1.0 / np.sqrt(dh)
    out = np.empty((n_q, d), dtype=np.float64)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = (qp[:, sl] @ kp[:, sl].T) * scale
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        weights = e / e.sum(axis=1, keepdims=True)
        out[:, sl] = weights @ vp[:, sl]
    return out


@njit(cache=True)
def attention_core_numba(qp, kp, vp, heads):  # pragma: no cover - jitted
    n_q, d = qp.shape
    n_kv = kp.shape[0]
    dh = d // heads
    scale = 1.0 / np.sqrt(dh)
    out = np.zeros((n_q, d))
    logits = np.empty(n_kv)
    for h in range(heads):
        base = h * dh
        for i in range(n_q):
            m = -np.inf
            for j in range(n_kv):
                s = 0.0
                for c in range(dh):
                    s += qp[i, base + c] * kp[j, base + c]
                s *= scale
                logits[j] = s
                if s > m:
                    m = s
            denom = 0.0
            for j in range(n_kv):
                logits[j] = np.exp(logits[j] - m)
                denom += logits[j]
            for j in range(n_kv):
                w = logits[j] / denom
                for c in range(dh):
                    out[i, base + c] += w * vp[j, base + c]
    return out


def sq_dist_matrix_numpy(z: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n, n), by explicit differences.

    The difference form (rather than the Gram-matrix trick) keeps results
    accurate enough to compare against loop oracles at 1e-12.
    """
    diff = z[:, None, :] - z[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@njit(cache=True)
def sq_dist_matrix_numba(z):  # pragma: no cover - jitted
    n, d = z.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for c in range(d):
                t = z[i, c] - z[j, c]
                s += t * t
            out[i, j] = s
            out[j, i] = s
    return out


USE_NUMBA = _env_wants_numba()

if USE_NUMBA:
    attention_core = attention_core_numba
    sq_dist_matrix = sq_dist_matrix_numba
else:
    attention_core = attention_core_numpy
    sq_dist_matrix = sq_dist_matrix_numpy
