"""Qubit models: homogenization with one thermal unit, and a two-unit ancilla."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import fixed_point
from .errors import InvalidArgument
from .model import CM2Model


@dataclass(frozen=True)
class PresetParams:
    f: float = 0.3
    g: float = 0.3
    g1: float = 0.3
    g2: float = 0.1
    epsilon_mix: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.f <= 1.0:
            raise InvalidArgument(f"f must lie in [0, 1], got {self.f}")
        if not all(np.isfinite([self.g, self.g1, self.g2])):
            raise InvalidArgument("angles must be finite")
        if not 0.0 <= self.epsilon_mix <= 1.0:
            raise InvalidArgument(f"epsilon_mix must lie in [0, 1], got {self.epsilon_mix}")


def thermal_qubit(f: float) -> np.ndarray:
    """``f |0><0| + (1 - f) |1><1|``; ``f`` is the ground-state population."""
    if not 0.0 <= f <= 1.0:
        raise InvalidArgument(f"f must lie in [0, 1], got {f}")
    return np.diag([f, 1.0 - f]).astype(complex)


def xplus() -> np.ndarray:
    return 0.5 * np.ones((2, 2), dtype=complex)


def mix(rho: np.ndarray, epsilon: float) -> np.ndarray:
    """``(1 - eps) rho + eps I/d``; regularizes pure states on request."""
    d = rho.shape[0]
    return (1.0 - epsilon) * rho + epsilon * np.eye(d) / d


def partial_swap(g: float) -> np.ndarray:
    """``exp(-i g (s+ s- + s- s+))`` on two qubits, basis order 00, 01, 10, 11."""
    c, s = np.cos(g), np.sin(g)
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = u[2, 1] = -1j * s
    return u


def computational_projectors(d: int = 2) -> list:
    out = []
    for k in range(d):
        p = np.zeros((d, d), dtype=complex)
        p[k, k] = 1.0
        out.append(p)
    return out


def single_qubit_model(f: float = 0.3, g: float = 0.3, rho_x0=None, epsilon_mix: float = 0.0) -> CM2Model:
    """Thermal qubit ancilla, partial SWAP, computational-basis readout."""
    PresetParams(f=f, g=g, epsilon_mix=epsilon_mix)
    return CM2Model(
        rho_x0=xplus() if rho_x0 is None else rho_x0,
        ancilla_units=[mix(thermal_qubit(f), epsilon_mix)],
        stages=[(0, partial_swap(g))],
        measurement_ops=computational_projectors(2),
        labels=["0", "1"],
    )


def two_qubit_model(
    f: float = 0.3, g1: float = 0.3, g2: float = 0.1, rho_x0=None, epsilon_mix: float = 0.0
) -> CM2Model:
    """Thermal unit then |x+> unit, collided in that order; only the first is read."""
    PresetParams(f=f, g1=g1, g2=g2, epsilon_mix=epsilon_mix)
    eye = np.eye(2)
    return CM2Model(
        rho_x0=xplus() if rho_x0 is None else rho_x0,
        ancilla_units=[mix(thermal_qubit(f), epsilon_mix), mix(xplus(), epsilon_mix)],
        stages=[(0, partial_swap(g1)), (1, partial_swap(g2))],
        measurement_ops=[np.kron(p, eye) for p in computational_projectors(2)],
        labels=["0", "1"],
    )


def fixed_point_start(model: CM2Model) -> CM2Model:
    return model.with_initial_state(fixed_point(model))


PRESETS = {
    "single-qubit": "thermal qubit ancilla (f), partial SWAP (g), computational readout",
    "two-qubit": "thermal unit (f, g1) then |x+> unit (g2); first unit read",
    "two-qubit-fp": "two-qubit model started at its unconditional fixed point",
}


def build_preset(name: str, f: float = 0.3, g: float = 0.3, g1: float = 0.3, g2: float = 0.1,
                 epsilon_mix: float = 0.0) -> CM2Model:
    if name == "single-qubit":
        return single_qubit_model(f, g, epsilon_mix=epsilon_mix)
    if name == "two-qubit":
        return two_qubit_model(f, g1, g2, epsilon_mix=epsilon_mix)
    if name == "two-qubit-fp":
        return fixed_point_start(two_qubit_model(f, g1, g2, epsilon_mix=epsilon_mix))
    raise InvalidArgument(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
