"""Random model generators for property tests and the inequality suite."""

from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .model import CM2Model
from .presets import computational_projectors

EIG_RANGE = (0.05, 0.95)


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank state from a complex Ginibre matrix."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_diagonal_state(d: int, rng: np.random.Generator, lo: float = EIG_RANGE[0],
                          hi: float = EIG_RANGE[1]) -> np.ndarray:
    """Diagonal state whose eigenvalues all lie in ``[lo, hi]``.

    Rejection sampling on the simplex; for qubits this is just ``p ~ U[lo, hi]``.
    """
    while True:
        p = rng.dirichlet(np.ones(d))
        if np.all((p >= lo) & (p <= hi)):
            return np.diag(p).astype(complex)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng)


def random_model(rng: np.random.Generator, n_units: int | None = None) -> CM2Model:
    """Qubit system, one or two qubit units, Haar stages, computational readout."""
    n = int(rng.integers(1, 3)) if n_units is None else n_units
    units = [random_diagonal_state(2, rng) for _ in range(n)]
    stages = [(j, haar_unitary(4, rng)) for j in range(n)]
    return CM2Model(
        rho_x0=random_density(2, rng),
        ancilla_units=units,
        stages=stages,
        measurement_ops=computational_projectors(2**n),
        labels=[str(k) for k in range(2**n)],
    )


def _incoherent_unitary(dx: int, dy: int, rng: np.random.Generator) -> np.ndarray:
    """Basis permutation, then an x-controlled unitary on the ancilla, with phases."""
    d = dx * dy
    perm = np.zeros((d, d), dtype=complex)
    perm[rng.permutation(d), np.arange(d)] = 1.0
    ctrl = np.zeros((d, d), dtype=complex)
    for x in range(dx):
        ctrl[x * dy:(x + 1) * dy, x * dy:(x + 1) * dy] = haar_unitary(dy, rng)
    phases = np.diag(np.exp(2j * np.pi * rng.random(d)))
    return phases @ ctrl @ perm


def random_incoherent_model(rng: np.random.Generator) -> CM2Model:
    """Conditionally incoherent model with diagonal initial state.

    Dimensions are 2 or 3 for the system and for each of one or two units;
    the measurement is a noisy diagonal readout of the whole ancilla.
    """
    dx = int(rng.integers(2, 4))
    n = int(rng.integers(1, 3))
    dims = [int(rng.integers(2, 4)) for _ in range(n)]
    units = [np.diag(rng.dirichlet(np.ones(d))).astype(complex) for d in dims]
    stages = [(j, _incoherent_unitary(dx, d, rng)) for j, d in enumerate(dims)]
    dy = int(np.prod(dims))
    nz = int(rng.integers(2, 4))
    noise = rng.dirichlet(np.ones(nz), size=dy).T  # M(z|y'), columns sum to 1
    ops = [np.diag(np.sqrt(noise[z])).astype(complex) for z in range(nz)]
    return CM2Model(
        rho_x0=np.diag(rng.dirichlet(np.ones(dx))).astype(complex),
        ancilla_units=units,
        stages=stages,
        measurement_ops=ops,
        labels=[str(z) for z in range(nz)],
    )
