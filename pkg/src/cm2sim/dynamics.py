"""Unconditional and conditional evolution of the system.

Two routes exist for every map. The functions :func:`joint_collide`,
:func:`uncond_step` and :func:`cond_apply` follow the definitions literally
(build the joint state, rotate, measure, partial-trace). The engines
(:func:`propagate`, :func:`enumerate_exact`, :func:`fixed_point`) use the
cached linear representations on ``model`` and work on stacks of states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import linalg
from .errors import BudgetExceeded, DegenerateDistribution, InvalidArgument, NonUniqueFixedPoint
from .model import CM2Model

MIN_WEIGHT = 1e-14
DEFAULT_PRUNE = 1e-14
DEFAULT_MAX_ENTRIES = 2**24
FIXED_POINT_GAP = 1e-8


def _check_system_state(rho, model: CM2Model) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    d = model.system_dim
    if rho.shape != (d, d):
        raise InvalidArgument(f"system state has shape {rho.shape}, model needs ({d}, {d})")
    return rho


def joint_collide(rho_x, model: CM2Model) -> np.ndarray:
    """Return ``U (rho_x (x) rho_Y) U^dag`` on X (x) Y."""
    rho_x = _check_system_state(rho_x, model)
    u = model.unitary
    return u @ np.kron(rho_x, model.rho_y) @ linalg.dag(u)


def uncond_step(rho_x, model: CM2Model) -> np.ndarray:
    joint = joint_collide(rho_x, model)
    return linalg.partial_trace(joint, [model.system_dim, model.ancilla_dim], [0])


def cond_apply(rho, z, model: CM2Model) -> np.ndarray:
    """Unnormalized conditional map for outcome ``z`` (index or label).

    The trace of the result is the probability of ``z`` given ``rho``, times
    the trace of ``rho`` itself.
    """
    zi = model.outcome_index(z)
    joint = joint_collide(rho, model)
    mz = np.kron(np.eye(model.system_dim), model.measurement_ops[zi])
    return linalg.partial_trace(mz @ joint @ linalg.dag(mz), [model.system_dim, model.ancilla_dim], [0])


def _choose(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF choice over the last axis, skipping weights below MIN_WEIGHT."""
    allowed = np.where(weights >= MIN_WEIGHT, weights, 0.0)
    total = allowed.sum(axis=-1)
    if np.any(total <= 0.0):
        raise DegenerateDistribution("every outcome has weight below 1e-14")
    cum = np.cumsum(allowed, axis=-1)
    idx = np.sum(cum <= (u * total)[..., None], axis=-1)
    # guard against u * total rounding onto the last edge
    last = allowed.shape[-1] - 1 - np.argmax(allowed[..., ::-1] > 0, axis=-1)
    return np.minimum(idx, last)


def sample_step(rho_cond, model: CM2Model, rng: np.random.Generator):
    """Draw one outcome. Returns ``(z, normalized post-measurement state, weight)``."""
    rho = _check_system_state(rho_cond, model)
    vec = rho.reshape(-1)
    cand = model.cond_superops @ vec
    d = model.system_dim
    w = np.real(linalg.trace(cand.reshape(-1, d, d)))
    z = int(_choose(w, np.asarray(rng.random())))
    state = cand[z].reshape(d, d) / w[z]
    return z, 0.5 * (state + linalg.dag(state)), float(w[z])


# -- unconditional ------------------------------------------------------------


@dataclass
class UnconditionalRun:
    """States of the averaged dynamics.

    ``states[t]`` is rho_X at t = 0..T; ``joints[t-1]``, ``ancilla[t-1]`` and
    ``units[j][t-1]`` describe collision t (t = 1..T).
    """

    states: np.ndarray
    joints: np.ndarray
    ancilla: np.ndarray
    units: list


def run_unconditional(model: CM2Model, steps: int, rho0=None) -> UnconditionalRun:
    if steps < 1:
        raise InvalidArgument("steps must be >= 1")
    rho = _check_system_state(model.rho_x0 if rho0 is None else rho0, model)
    d, dy = model.system_dim, model.ancilla_dim
    dims = model.dims
    states = np.empty((steps + 1, d, d), dtype=complex)
    joints = np.empty((steps, d * dy, d * dy), dtype=complex)
    ancilla = np.empty((steps, dy, dy), dtype=complex)
    units = [np.empty((steps, k, k), dtype=complex) for k in model.unit_dims]
    states[0] = rho
    for t in range(1, steps + 1):
        joint = joint_collide(states[t - 1], model)
        joints[t - 1] = joint
        x = linalg.partial_trace(joint, [d, dy], [0])
        states[t] = 0.5 * (x + linalg.dag(x))
        ancilla[t - 1] = linalg.partial_trace(joint, [d, dy], [1])
        for j in range(len(units)):
            units[j][t - 1] = linalg.partial_trace(joint, dims, [j + 1])
    return UnconditionalRun(states, joints, ancilla, units)


def fixed_point(model: CM2Model) -> np.ndarray:
    """Unique fixed point of the unconditional channel.

    Raises:
        NonUniqueFixedPoint: if the eigenvalue 1 of the channel's matrix
            representation is not separated from the rest of the spectrum
            by more than 1e-8.
    """
    s = model.uncond_superop
    d = model.system_dim
    ev = np.linalg.eigvals(s)
    dist = np.sort(np.abs(ev - 1.0))
    if dist.size > 1 and dist[1] <= FIXED_POINT_GAP:
        raise NonUniqueFixedPoint(
            f"channel has a degenerate eigenvalue 1 (spectral gap {dist[1]:.3e})"
        )
    _, _, vh = np.linalg.svd(s - np.eye(d * d))
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + linalg.dag(rho))


# -- trajectories ---------------------------------------------------------------


def trajectory_seed(master_seed: int, index: int) -> int:
    """Per-trajectory 64-bit seed derived from ``(master_seed, index)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def trajectory_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class TrajectoryRecord:
    """One stochastic realization.

    ``states[t]`` is the normalized conditional state at t = 0..T,
    ``intermediates[t-1]`` the state after collision t conditioned on the
    outcomes before it, ``weights[t-1]`` the probability of ``outcomes[t-1]``
    given the past.
    """

    seed: int
    outcomes: np.ndarray
    weights: np.ndarray
    states: np.ndarray
    intermediates: np.ndarray
    entropy: np.ndarray
    entropy_intermediate: np.ndarray
    expected_entropy: np.ndarray

    @property
    def log_probability(self) -> float:
        return float(np.sum(np.log(self.weights)))

    @property
    def gain(self) -> np.ndarray:
        """Holevo information of the next outcome given this record, per step."""
        return self.entropy_intermediate - self.expected_entropy


class _BatchResult(NamedTuple):
    outcomes: np.ndarray
    weights: np.ndarray
    entropy: np.ndarray
    entropy_intermediate: np.ndarray
    expected_entropy: np.ndarray
    states: np.ndarray | None
    intermediates: np.ndarray | None


def propagate(model: CM2Model, seeds: Sequence[int], steps: int, keep_states: bool = False) -> _BatchResult:
    """Run ``len(seeds)`` independent trajectories side by side.

    Each trajectory draws its outcomes from its own Philox stream, so the
    result for a seed does not depend on which other seeds share the batch.
    """
    if steps < 1:
        raise InvalidArgument("steps must be >= 1")
    n = len(seeds)
    d = model.system_dim
    nz = model.n_outcomes
    uniforms = np.stack([trajectory_rng(s).random(steps) for s in seeds]) if n else np.zeros((0, steps))
    su_t = model.uncond_superop.T
    sz_t = [s.T for s in model.cond_superops]

    rho0 = _check_system_state(model.rho_x0, model)
    vec = np.tile(rho0.reshape(1, -1), (n, 1))
    outcomes = np.empty((n, steps), dtype=np.int64)
    weights = np.empty((n, steps))
    ent = np.empty((n, steps + 1))
    ent_int = np.empty((n, steps))
    exp_ent = np.empty((n, steps))
    states = intermediates = None
    if keep_states:
        states = np.empty((n, steps + 1, d, d), dtype=complex)
        intermediates = np.empty((n, steps, d, d), dtype=complex)
        states[:, 0] = rho0
    ent[:, 0] = linalg.entropies(rho0[None])[0]
    rows = np.arange(n)

    for t in range(steps):
        inter = vec @ su_t
        cand = np.stack([vec @ s for s in sz_t], axis=1)
        cand_m = cand.reshape(n, nz, d, d)
        w = np.real(np.trace(cand_m, axis1=-2, axis2=-1))
        z = _choose(w, uniforms[:, t])
        keep = w >= MIN_WEIGHT
        norm = cand_m / np.where(keep, w, 1.0)[..., None, None]
        s_cand = np.where(keep, linalg.entropies(norm), 0.0)
        inter_m = inter.reshape(n, d, d)
        ent_int[:, t] = linalg.entropies(inter_m)
        exp_ent[:, t] = np.sum(w * s_cand, axis=1)
        chosen = norm[rows, z]
        chosen = 0.5 * (chosen + linalg.dag(chosen))
        outcomes[:, t] = z
        weights[:, t] = w[rows, z]
        ent[:, t + 1] = s_cand[rows, z]
        vec = chosen.reshape(n, -1)
        if keep_states:
            states[:, t + 1] = chosen
            intermediates[:, t] = inter_m
    return _BatchResult(outcomes, weights, ent, ent_int, exp_ent, states, intermediates)


def run_trajectory(model: CM2Model, steps: int, seed: int) -> TrajectoryRecord:
    r = propagate(model, [seed], steps, keep_states=True)
    return TrajectoryRecord(
        seed=int(seed),
        outcomes=r.outcomes[0],
        weights=r.weights[0],
        states=r.states[0],
        intermediates=r.intermediates[0],
        entropy=r.entropy[0],
        entropy_intermediate=r.entropy_intermediate[0],
        expected_entropy=r.expected_entropy[0],
    )


# -- exact enumeration ----------------------------------------------------------


@dataclass
class BranchEnsemble:
    """All outcome strings of length ``t`` kept after pruning.

    ``zetas[b]`` is the outcome-index sequence of branch ``b``, ``probs[b]``
    its probability and ``states[b]`` the normalized conditional state.
    ``discarded`` is the probability mass removed by pruning so far.
    """

    t: int
    zetas: np.ndarray
    probs: np.ndarray
    states: np.ndarray
    discarded: float = 0.0

    def __len__(self) -> int:
        return len(self.probs)

    def mean_state(self) -> np.ndarray:
        return np.einsum("b,bij->ij", self.probs, self.states)

    def probability_of(self, zeta: Sequence[int]) -> float:
        hit = np.all(self.zetas == np.asarray(zeta, dtype=np.int64)[None, :], axis=1)
        return float(self.probs[hit].sum())


def enumeration_size(model: CM2Model, steps: int) -> int:
    """Upper bound on complex entries held by :func:`enumerate_exact`."""
    nz = model.n_outcomes
    return sum(nz**t for t in range(steps + 1)) * model.system_dim**2


def enumerate_exact(
    model: CM2Model,
    steps: int,
    prune: float | None = DEFAULT_PRUNE,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> list:
    """Exact branch ensembles for t = 0..steps.

    Branches with probability ``<= prune`` are dropped and their mass added
    to ``discarded``; ``prune=None`` keeps every branch, including those of
    probability zero.
    """
    if steps < 0:
        raise InvalidArgument("steps must be >= 0")
    size = enumeration_size(model, steps)
    if size > max_entries:
        raise BudgetExceeded(
            f"exact enumeration of {model.n_outcomes}^{steps} outcome strings needs about "
            f"{size} complex entries ({size * 16 / 2**20:.1f} MiB), budget is {max_entries}"
        )
    d = model.system_dim
    nz = model.n_outcomes
    rho0 = _check_system_state(model.rho_x0, model)
    ens = BranchEnsemble(0, np.zeros((1, 0), dtype=np.int64), np.ones(1), rho0[None].copy())
    out = [ens]
    for t in range(1, steps + 1):
        vec = ens.states.reshape(len(ens), -1)
        cand = np.einsum("zij,bj->bzi", model.cond_superops, vec).reshape(len(ens), nz, d, d)
        w = np.real(np.trace(cand, axis1=-2, axis2=-1))
        probs = (ens.probs[:, None] * w).reshape(-1)
        safe = np.where(w > 0, w, 1.0)
        states = (cand / safe[..., None, None]).reshape(-1, d, d)
        states = 0.5 * (states + linalg.dag(states))
        zetas = np.concatenate(
            [np.repeat(ens.zetas, nz, axis=0), np.tile(np.arange(nz), len(ens))[:, None]], axis=1
        )
        discarded = ens.discarded
        if prune is not None:
            keep = probs > prune
            discarded += float(np.sum(probs[~keep]))
            probs, states, zetas = probs[keep], states[keep], zetas[keep]
        ens = BranchEnsemble(t, zetas, probs, states, discarded)
        out.append(ens)
    return out
