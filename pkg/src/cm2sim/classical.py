"""Classical hidden-Markov counterpart of incoherent collision models.

When the collision maps basis states to basis states (up to phases) and the
ancilla preparation and measurement are diagonal, the outcome statistics of
the quantum model are those of a classical chain with transition matrix

    W(x', z | x) = sum_{y, y'} M(z | y') Q(x', y' | x, y) p(y),

where ``Q = |<x'y'|U|xy>|^2`` and ``M(z|y') = <y'|M_z^dag M_z|y'>``. Arrays
are indexed in the order their symbols appear: ``Q[x', y', x, y]``,
``M[z, y']``, ``W[x', z, x]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import enumerate_exact, trajectory_rng
from .errors import InvalidArgument, NotIncoherent
from .model import CM2Model, full_collision_unitary

OVERLAP_TOL = 1e-10
BRANCH_FLOOR = 1e-12
DIAGONAL_TOL = 1e-12
STOCHASTIC_TOL = 1e-10


class IncoherenceReport(NamedTuple):
    holds: bool
    witness: tuple | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.holds


def _basis(b, d: int) -> np.ndarray:
    if b is None:
        return np.eye(d, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if b.shape != (d, d) or not np.allclose(b.conj().T @ b, np.eye(d), atol=1e-10):
        raise InvalidArgument(f"basis must be a {d}x{d} unitary whose columns are the basis vectors")
    return b


def check_unconditionally_incoherent(U, dx: int, dy: int, x_basis=None, y_basis=None) -> IncoherenceReport:
    """Does every branch ``<y'|U|x y>`` land on a single system basis state?

    Branches with probability below ``1e-12`` are ignored. The witness is the
    first offending ``(x, y, y')`` in lexicographic order.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape != (dx * dy, dx * dy):
        raise InvalidArgument(f"unitary of shape {U.shape} does not act on {dx}x{dy}")
    bx, by = _basis(x_basis, dx), _basis(y_basis, dy)
    # amplitudes <x' y'| U |x y> in the chosen bases
    amp = (np.kron(bx, by).conj().T @ U @ np.kron(bx, by)).reshape(dx, dy, dx, dy)
    for x, y, yp in itertools.product(range(dx), range(dy), range(dy)):
        v = amp[:, yp, x, y]
        p = float(np.vdot(v, v).real)
        if p <= BRANCH_FLOOR:
            continue
        if np.max(np.abs(v) ** 2) / p < 1.0 - OVERLAP_TOL:
            return IncoherenceReport(False, (x, y, yp), f"<y'={yp}|U|x={x}, y={y}> is a superposition of system basis states")
    return IncoherenceReport(True)


def _off_diagonal(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - np.diag(np.diag(m)))))


def check_conditionally_incoherent(model: CM2Model) -> IncoherenceReport:
    """Operator-level conditions for an exact classical description.

    The initial system state is not part of the test; see :func:`crosscheck`.
    """
    unc = check_unconditionally_incoherent(full_collision_unitary(model), model.system_dim, model.ancilla_dim)
    if not unc:
        return IncoherenceReport(False, unc.witness, "collision is not unconditionally incoherent: " + unc.reason)
    for j, rho in enumerate(model.ancilla_units):
        if _off_diagonal(rho) > DIAGONAL_TOL:
            return IncoherenceReport(False, (j,), f"ancilla unit {j} is not diagonal")
    for z, m in enumerate(model.measurement_ops):
        if _off_diagonal(m) > DIAGONAL_TOL:
            return IncoherenceReport(False, (z,), f"measurement operator {model.labels[z]!r} is not diagonal")
    return IncoherenceReport(True)


# -- transition matrices ------------------------------------------------------------


def build_Q(U, dx: int, dy: int) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.shape != (dx * dy, dx * dy):
        raise InvalidArgument(f"unitary of shape {U.shape} does not act on {dx}x{dy}")
    q = (np.abs(U) ** 2).reshape(dx, dy, dx, dy)
    flat = q.reshape(dx * dy, dx * dy)
    dev = max(np.max(np.abs(flat.sum(axis=0) - 1)), np.max(np.abs(flat.sum(axis=1) - 1)))
    if dev > STOCHASTIC_TOL:
        raise InvalidArgument(f"Q is not doubly stochastic (deviation {dev:.2e}); is U unitary?")
    return q


def build_M(measurement_ops: Sequence) -> np.ndarray:
    ops = np.asarray(measurement_ops, dtype=complex)
    effects = np.einsum("zki,zkj->zij", ops.conj(), ops)
    m = np.real(np.einsum("zii->zi", effects))
    dev = float(np.max(np.abs(m.sum(axis=0) - 1)))
    if dev > DIAGONAL_TOL:
        raise InvalidArgument(f"M(z|y') columns do not sum to one (deviation {dev:.2e})")
    return m


def build_W(Q: np.ndarray, M: np.ndarray, p_y) -> np.ndarray:
    p_y = np.asarray(p_y, dtype=float)
    w = np.einsum("zb,abxy,y->azx", M, Q, p_y)
    dev = float(np.max(np.abs(w.sum(axis=(0, 1)) - 1)))
    if dev > STOCHASTIC_TOL:
        raise InvalidArgument(f"W(x'z|x) is not normalized (deviation {dev:.2e})")
    return w


def classical_chain(Q: np.ndarray, p_y) -> np.ndarray:
    """Unconditional population transfer ``C[x', x] = sum Q(x'y'|xy) p(y)``."""
    return np.einsum("abxy,y->ax", Q, np.asarray(p_y, dtype=float))


def model_W(model: CM2Model) -> np.ndarray:
    dx, dy = model.system_dim, model.ancilla_dim
    q = build_Q(full_collision_unitary(model), dx, dy)
    return build_W(q, build_M(model.measurement_ops), np.real(np.diag(model.rho_y)))


# -- forward recursion ---------------------------------------------------------------


class Forward(NamedTuple):
    joint: np.ndarray
    probability: float


def hmm_forward(W: np.ndarray, p_x0, zeta: Sequence[int]) -> Forward:
    """``p(x_t, zeta_t)`` and ``P(zeta_t)`` without rescaling."""
    alpha = np.asarray(p_x0, dtype=float).copy()
    nz = W.shape[1]
    for z in zeta:
        if not 0 <= int(z) < nz:
            raise InvalidArgument(f"outcome {z} out of range for {nz} outcomes")
        alpha = W[:, int(z), :] @ alpha
    return Forward(alpha, float(alpha.sum()))


def sequence_probabilities(W: np.ndarray, p_x0, steps: int) -> tuple:
    """Joint ``p(x_T, zeta)`` for every outcome string of length ``steps``.

    Strings are ordered lexicographically, earliest outcome most significant.
    Returns ``(zetas, probs, joint)``.
    """
    dx, nz = W.shape[0], W.shape[1]
    alpha = np.asarray(p_x0, dtype=float)[None, :]
    for _ in range(steps):
        alpha = np.einsum("azx,bx->bza", W, alpha).reshape(-1, dx)
    zetas = np.array(list(itertools.product(range(nz), repeat=steps)), dtype=np.int64).reshape(-1, steps)
    return zetas, alpha.sum(axis=1), alpha


@dataclass
class ClassicalTrajectory:
    seed: int
    outcomes: np.ndarray
    states: np.ndarray


def classical_sample(W: np.ndarray, p_x0, steps: int, seed: int) -> ClassicalTrajectory:
    """Sample hidden states ``x_0..x_T`` and outcomes ``z_1..z_T``."""
    dx, nz = W.shape[0], W.shape[1]
    rng = trajectory_rng(seed)
    u = rng.random(steps + 1)
    p = np.asarray(p_x0, dtype=float)
    x = int(min(np.searchsorted(np.cumsum(p), u[0] * p.sum(), side="right"), dx - 1))
    xs, zs = [x], []
    for t in range(steps):
        col = W[:, :, x].reshape(-1)
        k = int(min(np.searchsorted(np.cumsum(col), u[t + 1] * col.sum(), side="right"), col.size - 1))
        x, z = divmod(k, nz)
        xs.append(x)
        zs.append(z)
    return ClassicalTrajectory(seed, np.array(zs, dtype=np.int64), np.array(xs, dtype=np.int64))


# -- quantum cross-check ---------------------------------------------------------------


@dataclass
class CrossCheck:
    steps: int
    n_sequences: int
    max_diff: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_diff < self.tol

    def to_dict(self) -> dict:
        return {"steps": self.steps, "n_sequences": self.n_sequences, "max_diff": self.max_diff,
                "tol": self.tol, "pass": self.ok}


def crosscheck(model: CM2Model, steps: int, tol: float = 1e-12) -> CrossCheck:
    """Compare ``P(zeta)`` from exact quantum enumeration with the forward recursion.

    Raises :class:`NotIncoherent` naming the first violated condition.
    """
    rep = check_conditionally_incoherent(model)
    if not rep:
        raise NotIncoherent(rep.reason)
    if _off_diagonal(model.rho_x0) > DIAGONAL_TOL:
        raise NotIncoherent("initial system state is not diagonal")
    ens = enumerate_exact(model, steps, prune=None)[-1]
    zetas, p_cl, _ = sequence_probabilities(model_W(model), np.real(np.diag(model.rho_x0)), steps)
    if not np.array_equal(zetas, ens.zetas):
        raise AssertionError("outcome-string orderings disagree")
    return CrossCheck(steps, len(p_cl), float(np.max(np.abs(ens.probs - p_cl))), tol)
