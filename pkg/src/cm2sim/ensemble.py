"""Monte-Carlo estimates of the ledger from stochastic trajectories.

Unconditional quantities (S_u, fluxes, dSigma_u) come from the deterministic
averaged dynamics; only record-averaged quantities are sampled. Trajectory
``i`` of a run with master seed ``s`` always uses the stream
``trajectory_seed(s, i)`` and belongs to batch ``i * n_batches // n``, so
results are independent of how batches are spread over workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg
from .dynamics import TrajectoryRecord, propagate, run_trajectory, run_unconditional, trajectory_seed
from .model import CM2Model
from .thermo import (
    COLUMNS,
    ThermoSeries,
    _integrate,
    check_measurement_condition,
    delta_phi_c,
    delta_sigma_u,
)

DEFAULT_BATCHES = 20


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("CM2_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"CM2_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"CM2_THREADS must be a positive integer, got {env!r}")
        return n
    return default or os.cpu_count() or 1


@dataclass
class UnconditionalLedger:
    """Deterministic per-step quantities of the averaged dynamics, t = 0..T."""

    S_u: np.ndarray
    dSigma_u: np.ndarray
    dPhi_u: np.ndarray
    dPhi_c: np.ndarray
    per_unit: np.ndarray
    divergent_units: tuple
    condition_holds: bool
    states: np.ndarray


def unconditional_ledger(model: CM2Model, steps: int) -> UnconditionalLedger:
    unc = run_unconditional(model, steps)
    nt = steps + 1
    dsu, dpu, dpc = (np.full(nt, np.nan) for _ in range(3))
    per_unit = np.full((nt, len(model.ancilla_units)), np.nan)
    divergent = set()
    for t in range(1, nt):
        prod = delta_sigma_u(unc.states[t - 1], model)
        dsu[t], dpu[t] = prod.dSigma_u, prod.dPhi_u
        per_unit[t] = prod.dPhi_u_per_unit
        dpc[t] = delta_phi_c(prod.rho_y_post, model).dPhi_c
        divergent.update(j for j, f in enumerate(prod.divergent) if f)
    return UnconditionalLedger(
        S_u=linalg.entropies(unc.states),
        dSigma_u=dsu,
        dPhi_u=dpu,
        dPhi_c=dpc,
        per_unit=per_unit,
        divergent_units=tuple(sorted(divergent)),
        condition_holds=check_measurement_condition(model).holds,
        states=unc.states,
    )


def batch_bounds(n_traj: int, n_batches: int = DEFAULT_BATCHES) -> list:
    nb = max(1, min(n_batches, n_traj))
    return [(b * n_traj // nb, (b + 1) * n_traj // nb) for b in range(nb)]


def _batch_means(model: CM2Model, steps: int, master_seed: int, lo: int, hi: int):
    seeds = [trajectory_seed(master_seed, i) for i in range(lo, hi)]
    r = propagate(model, seeds, steps)
    n = hi - lo
    s_c = np.array([math.fsum(c) for c in r.entropy.T]) / n
    gain = np.array([math.fsum(c) for c in (r.entropy_intermediate - r.expected_entropy).T]) / n
    clicks = np.array([math.fsum(c) for c in r.outcomes.T.astype(float)]) / n
    return s_c, np.concatenate([[np.nan], gain]), np.concatenate([[np.nan], clicks])


def _derived(s_u, s_c, gain, dsu, condition_holds):
    """Columns that follow linearly from S_c and G for one batch (or the mean)."""
    info = s_u - s_c
    di = np.full_like(info, np.nan)
    di[1:] = info[1:] - info[:-1]
    dsc = dsu - di if condition_holds else np.full_like(di, np.nan)
    return {"S_c": s_c, "I": info, "dI": di, "G": gain, "L": gain - di, "dSigma_c": dsc}


def run_ensemble(
    model: CM2Model,
    steps: int,
    n_traj: int,
    master_seed: int,
    workers: int | None = None,
    n_batches: int = DEFAULT_BATCHES,
) -> ThermoSeries:
    """Ledger averaged over ``n_traj`` trajectories with batch standard errors."""
    if steps < 1 or n_traj < 1:
        raise ValueError("steps and n_traj must be positive")
    unc = unconditional_ledger(model, steps)
    bounds = batch_bounds(n_traj, n_batches)
    workers = worker_count() if workers is None else workers
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(lambda b: _batch_means(model, steps, master_seed, *b), bounds))

    sizes = np.array([hi - lo for lo, hi in bounds], dtype=float)
    batch_cols = {k: [] for k in ("S_c", "I", "dI", "G", "L", "dSigma_c")}
    clicks = []
    for s_c, gain, click in parts:
        for k, v in _derived(unc.S_u, s_c, gain, unc.dSigma_u, unc.condition_holds).items():
            batch_cols[k].append(v)
        clicks.append(click)
    batches = {k: np.stack(v) for k, v in batch_cols.items()}

    def pooled(stack):
        return np.array([math.fsum(sizes * col) for col in stack.T]) / n_traj

    s_c = pooled(batches["S_c"])
    g = np.concatenate([[np.nan], pooled(batches["G"][:, 1:])])
    values = _derived(unc.S_u, s_c, g, unc.dSigma_u, unc.condition_holds)
    values.update(S_u=unc.S_u, dSigma_u=unc.dSigma_u, dPhi_u=unc.dPhi_u, dPhi_c=unc.dPhi_c)
    _integrate(values)

    # integrated conditional production per batch, for its standard error
    sig_c = np.zeros_like(batches["dSigma_c"])
    sig_c[:, 1:] = np.cumsum(batches["dSigma_c"][:, 1:], axis=1)
    batches["Sigma_c_int"] = sig_c

    nb = len(bounds)
    se = {k: np.zeros(steps + 1) for k in COLUMNS}
    if nb > 1:
        for k, stack in batches.items():
            se[k] = np.std(stack, axis=0, ddof=1) / np.sqrt(nb)
    return ThermoSeries(
        values=values,
        se=se,
        n_samples=n_traj,
        batches=batches,
        per_unit_flux=unc.per_unit,
        divergent_units=unc.divergent_units,
        extras={"click_rate": pooled(np.stack(clicks))},
    )


# -- single realization -----------------------------------------------------------


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Bloch coordinates of qubit states, ``rho = (I + r.sigma) / 2``, |0> at +z."""
    rho = np.asarray(rho)
    x = 2 * np.real(rho[..., 0, 1])
    y = -2 * np.imag(rho[..., 0, 1])
    z = np.real(rho[..., 0, 0] - rho[..., 1, 1])
    return np.stack([x, y, z], axis=-1)


def accumulated_mean(x: np.ndarray) -> np.ndarray:
    """Running average ``(x_1 + ... + x_t) / t``."""
    x = np.asarray(x, dtype=float)
    return np.cumsum(x) / np.arange(1, len(x) + 1)


def block_standard_error(x: np.ndarray, n_blocks: int = DEFAULT_BATCHES) -> float:
    """Standard error of the mean of a correlated series from block means."""
    x = np.asarray(x, dtype=float)
    nb = min(n_blocks, len(x))
    if nb < 2:
        return 0.0
    edges = [b * len(x) // nb for b in range(nb + 1)]
    means = np.array([np.mean(x[edges[b]:edges[b + 1]]) for b in range(nb)])
    return float(np.std(means, ddof=1) / np.sqrt(nb))


@dataclass
class SingleShot:
    """Per-step ledger along one trajectory, t = 1..T (arrays of length T).

    ``G`` is the Holevo information of the next outcome given this
    trajectory's past; ``dI`` the change of ``S_u - S_c`` along it, so that
    ensemble averages of ``G``, ``dI``, ``L`` and ``dSigma_c`` reproduce the
    averaged ledger.
    """

    record: TrajectoryRecord
    t: np.ndarray
    z: np.ndarray
    S_c: np.ndarray
    S_u: np.ndarray
    G: np.ndarray
    dI: np.ndarray
    L: np.ndarray
    dSigma_u: np.ndarray
    dSigma_c: np.ndarray
    divergent_units: tuple

    @property
    def clicks(self) -> np.ndarray:
        return accumulated_mean(self.z)

    def accumulated(self, name: str) -> np.ndarray:
        return accumulated_mean(getattr(self, name))

    def bloch(self) -> np.ndarray:
        return bloch_vector(self.record.states[1:])


def run_single_shot(model: CM2Model, steps: int, master_seed: int) -> SingleShot:
    """Trajectory 0 of the ensemble with the same master seed."""
    unc = unconditional_ledger(model, steps)
    rec = run_trajectory(model, steps, trajectory_seed(master_seed, 0))
    info = unc.S_u - rec.entropy
    di = info[1:] - info[:-1]
    g = rec.gain
    dsu = unc.dSigma_u[1:]
    dsc = dsu - di if unc.condition_holds else np.full_like(di, np.nan)
    return SingleShot(
        record=rec,
        t=np.arange(1, steps + 1),
        z=rec.outcomes.astype(float),
        S_c=rec.entropy[1:],
        S_u=unc.S_u[1:],
        G=g,
        dI=di,
        L=g - di,
        dSigma_u=dsu,
        dSigma_c=dsc,
        divergent_units=unc.divergent_units,
    )
