"""Dense linear algebra on small Hilbert spaces.

Index convention: in ``tensor(a, b)`` the left factor ``a`` carries the most
significant index, so the basis state ``|ij>`` sits at row ``i * dim(b) + j``.
Every routine here (partial traces, embeddings) follows the same ordering.
"""

from __future__ import annotations

from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidState

HERMITIAN_TOL = 1e-10
NEGATIVE_TOL = 1e-9
EIG_FLOOR = 1e-12


class HermitianSpectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgument(f"{name} must be square, got shape {m.shape}")
    return m


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product, leftmost factor slowest."""
    if not ops:
        raise InvalidArgument("tensor needs at least one operand")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Args:
        m: operator on the composite space, shape ``(D, D)`` with
            ``D = prod(dims)``. A leading batch axis is allowed.
        dims: local dimensions, slowest index first.
        keep: indices of the subsystems to keep. The result keeps them in
            ascending order.
    """
    m = np.asarray(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if m.shape[-2:] != (total, total):
        raise InvalidArgument(f"operator shape {m.shape[-2:]} does not match dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= len(dims):
        raise InvalidArgument(f"keep={keep} is not a non-empty subset of 0..{len(dims) - 1}")

    batch = m.shape[:-2]
    n = len(dims)
    t = m.reshape(batch + tuple(dims) + tuple(dims))
    nb = len(batch)
    # einsum labels: batch, row indices, column indices (traced ones shared)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    bl = letters[:nb]
    rows = list(letters[nb:nb + n])
    cols = list(letters[nb + n:nb + 2 * n])
    for i in range(n):
        if i not in keep:
            cols[i] = rows[i]
    out = bl + "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    r = np.einsum(bl + "".join(rows) + "".join(cols) + "->" + out, t)
    kd = int(np.prod([dims[i] for i in keep]))
    return r.reshape(batch + (kd, kd))


def embed(op: np.ndarray, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in the listed order) to the full space."""
    dims = [int(d) for d in dims]
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets) or any(t < 0 or t >= len(dims) for t in targets):
        raise InvalidArgument(f"bad targets {targets} for dims {dims}")
    op = _square(op, "op")
    td = [dims[t] for t in targets]
    if op.shape[0] != int(np.prod(td)):
        raise InvalidArgument(f"op of dim {op.shape[0]} does not act on subsystems {targets}")
    rest = [i for i in range(len(dims)) if i not in targets]
    rd = int(np.prod([dims[i] for i in rest])) if rest else 1
    full = np.kron(op, np.eye(rd))
    # axes of `full` are ordered (targets..., rest...); move them into place
    order = targets + rest
    n = len(dims)
    t = full.reshape([dims[i] for i in order] * 2)
    perm = [order.index(i) for i in range(n)]
    t = t.transpose(perm + [n + p for p in perm])
    total = int(np.prod(dims))
    return t.reshape(total, total)


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    u = _square(u, "unitary")
    return float(np.max(np.abs(u @ dag(u) - np.eye(u.shape[0])))) <= tol


def hermiticity_error(h: np.ndarray) -> float:
    return float(np.max(np.abs(h - dag(h)))) if np.size(h) else 0.0


def eig_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> HermitianSpectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    h = _square(h)
    err = hermiticity_error(h)
    if err > tol:
        raise InvalidArgument(f"matrix is not Hermitian (max |h - h^dag| = {err:.3e})")
    w, v = np.linalg.eigh(0.5 * (h + dag(h)))
    return HermitianSpectrum(w, v)


def _clamp(w: np.ndarray) -> np.ndarray:
    lo = np.min(w) if w.size else 0.0
    if lo < -NEGATIVE_TOL:
        raise InvalidState(f"negative eigenvalue {lo:.3e}")
    return np.where(w < 0.0, 0.0, w)


def log_on_support(rho: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Matrix logarithm restricted to the support of ``rho``.

    Eigenvalues at or below ``floor`` get log-value 0, which implements the
    0 ln 0 = 0 convention wherever the result multiplies ``rho`` itself.
    """
    w, v = eig_hermitian(rho)
    w = _clamp(w)
    lw = np.zeros_like(w)
    sup = w > floor
    lw[sup] = np.log(w[sup])
    return (v * lw) @ dag(v)


def support_projector(rho: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    w, v = eig_hermitian(rho)
    vs = v[:, w > floor]
    return vs @ dag(vs)


def entropy_from_eigenvalues(w: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """-sum(w ln w) along the last axis, dropping eigenvalues <= floor."""
    w = np.asarray(w, dtype=float)
    lo = np.min(w) if w.size else 0.0
    if lo < -NEGATIVE_TOL:
        raise InvalidState(f"negative eigenvalue {lo:.3e}")
    safe = np.where(w > floor, w, 1.0)
    return -np.sum(np.where(w > floor, w * np.log(safe), 0.0), axis=-1)


def entropies(states: np.ndarray) -> np.ndarray:
    """Von Neumann entropies (nats) of a stack of density matrices."""
    states = np.asarray(states)
    herm = 0.5 * (states + dag(states))
    return entropy_from_eigenvalues(np.linalg.eigvalsh(herm))


def trace(m: np.ndarray) -> np.ndarray:
    return np.trace(m, axis1=-2, axis2=-1)
