"""Model definition: ancilla preparation, collision unitary and measurement.

A model is immutable. Structural problems (wrong shapes, unknown units) raise
on construction; physical problems (non-unitary stages, incomplete
measurements, invalid states) are collected by :func:`validate` so that a
model file can be diagnosed in one pass.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import linalg
from .errors import InvalidArgument, InvalidState

UNITARY_TOL = 1e-12
COMPLETENESS_TOL = 1e-10
TRACE_TOL = 1e-10


def as_density(rho, name: str = "state") -> np.ndarray:
    """Return ``rho`` as a complex array after checking it is a density matrix."""
    rho = np.array(rho, dtype=complex)
    problems = density_problems(rho)
    if problems:
        raise InvalidState(f"{name}: " + "; ".join(f"{k} ({v:.3e})" for k, v in problems))
    return rho


def density_problems(rho: np.ndarray) -> list[tuple[str, float]]:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
        return [("not a square matrix", float("nan"))]
    out = []
    herm = linalg.hermiticity_error(rho)
    if herm > linalg.HERMITIAN_TOL:
        out.append(("not Hermitian", herm))
    lo = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if lo < -linalg.NEGATIVE_TOL:
        out.append(("negative eigenvalue", lo))
    tr = abs(np.trace(rho) - 1.0)
    if tr > TRACE_TOL:
        out.append(("trace differs from 1", float(tr)))
    return out


class Stage(NamedTuple):
    unit: int
    unitary: np.ndarray


@dataclass(frozen=True, eq=False)
class CM2Model:
    """A continuously monitored collisional model.

    Attributes:
        rho_x0: initial system state.
        ancilla_units: preparation state of each elementary ancilla unit; the
            full ancilla is their tensor product, first unit slowest.
        stages: ordered collisions; stage ``k`` applies ``unitary`` on
            ``X (x) Y_unit``. Later stages act after (left of) earlier ones.
        measurement_ops: Kraus operators ``M_z`` on the full ancilla space.
        labels: outcome labels, one per operator.
    """

    rho_x0: np.ndarray
    ancilla_units: tuple
    stages: tuple
    measurement_ops: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "rho_x0", np.array(self.rho_x0, dtype=complex))
        units = tuple(np.array(u, dtype=complex) for u in self.ancilla_units)
        set_(self, "ancilla_units", units)
        stages = tuple(Stage(int(s[0]), np.array(s[1], dtype=complex)) for s in self.stages)
        set_(self, "stages", stages)
        ops = tuple(np.array(m, dtype=complex) for m in self.measurement_ops)
        set_(self, "measurement_ops", ops)
        labels = tuple(str(l) for l in self.labels) or tuple(str(i) for i in range(len(ops)))
        set_(self, "labels", labels)

        dx = self.rho_x0.shape[0] if self.rho_x0.ndim == 2 else -1
        if self.rho_x0.ndim != 2 or self.rho_x0.shape != (dx, dx) or dx < 1:
            raise InvalidArgument(f"rho_x0 must be square, got {self.rho_x0.shape}")
        if not units:
            raise InvalidArgument("at least one ancilla unit is required")
        for j, u in enumerate(units):
            if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] < 1:
                raise InvalidArgument(f"ancilla unit {j} must be square, got {u.shape}")
        if not stages:
            raise InvalidArgument("at least one collision stage is required")
        for k, (j, u) in enumerate(stages):
            if not 0 <= j < len(units):
                raise InvalidArgument(f"stage {k} targets unknown unit {j}")
            d = dx * units[j].shape[0]
            if u.shape != (d, d):
                raise InvalidArgument(f"stage {k} unitary has shape {u.shape}, expected ({d}, {d})")
        dy = self.ancilla_dim
        if not ops:
            raise InvalidArgument("measurement needs at least one operator")
        for z, m in enumerate(ops):
            if m.shape != (dy, dy):
                raise InvalidArgument(f"measurement operator {z} has shape {m.shape}, expected ({dy}, {dy})")
        if len(labels) != len(ops):
            raise InvalidArgument(f"{len(labels)} labels for {len(ops)} measurement operators")
        if len(set(labels)) != len(labels):
            raise InvalidArgument("outcome labels must be distinct")

    # -- structure ---------------------------------------------------------

    @property
    def system_dim(self) -> int:
        return self.rho_x0.shape[0]

    @property
    def unit_dims(self) -> tuple:
        return tuple(u.shape[0] for u in self.ancilla_units)

    @property
    def ancilla_dim(self) -> int:
        return int(np.prod(self.unit_dims))

    @property
    def n_outcomes(self) -> int:
        return len(self.measurement_ops)

    @property
    def dims(self) -> tuple:
        """Subsystem dimensions of X (x) Y_1 (x) ... (x) Y_N."""
        return (self.system_dim,) + self.unit_dims

    def outcome_index(self, z) -> int:
        if isinstance(z, (int, np.integer)) and not isinstance(z, bool):
            if 0 <= z < self.n_outcomes:
                return int(z)
            raise InvalidArgument(f"outcome index {z} out of range")
        try:
            return self.labels.index(str(z))
        except ValueError:
            raise InvalidArgument(f"unknown outcome label {z!r}") from None

    def with_initial_state(self, rho) -> "CM2Model":
        return dataclasses.replace(self, rho_x0=np.array(rho, dtype=complex))

    # -- derived operators -------------------------------------------------

    @cached_property
    def rho_y(self) -> np.ndarray:
        return linalg.tensor(*self.ancilla_units)

    @cached_property
    def unitary(self) -> np.ndarray:
        return full_collision_unitary(self)

    @cached_property
    def ancilla_log(self) -> np.ndarray:
        """Sum over units of ``ln rho_Yj`` (support-restricted), embedded on Y.

        Equals ``ln rho_Y`` when every unit is full rank. For a rank-deficient
        unit only the on-support part is kept; callers flag the divergence.
        """
        dims = self.unit_dims
        out = np.zeros((self.ancilla_dim, self.ancilla_dim), dtype=complex)
        for j, u in enumerate(self.ancilla_units):
            out += linalg.embed(linalg.log_on_support(u), dims, [j])
        return out

    @cached_property
    def unit_supports(self) -> tuple:
        return tuple(linalg.support_projector(u) for u in self.ancilla_units)

    @cached_property
    def cond_superops(self) -> np.ndarray:
        """Stack ``S[z]`` with ``vec(E_z(rho)) = S[z] @ vec(rho)`` (row-major vec)."""
        d = self.system_dim
        dy = self.ancilla_dim
        u = self.unitary
        rho_y = self.rho_y
        out = np.zeros((self.n_outcomes, d * d, d * d), dtype=complex)
        for col in range(d * d):
            basis = np.zeros(d * d, dtype=complex)
            basis[col] = 1.0
            joint = u @ np.kron(basis.reshape(d, d), rho_y) @ linalg.dag(u)
            for z, m in enumerate(self.measurement_ops):
                mz = np.kron(np.eye(d), m)
                red = linalg.partial_trace(mz @ joint @ linalg.dag(mz), [d, dy], [0])
                out[z, :, col] = red.reshape(-1)
        return out

    @cached_property
    def uncond_superop(self) -> np.ndarray:
        d = self.system_dim
        dy = self.ancilla_dim
        u = self.unitary
        out = np.zeros((d * d, d * d), dtype=complex)
        for col in range(d * d):
            basis = np.zeros(d * d, dtype=complex)
            basis[col] = 1.0
            joint = u @ np.kron(basis.reshape(d, d), self.rho_y) @ linalg.dag(u)
            out[:, col] = linalg.partial_trace(joint, [d, dy], [0]).reshape(-1)
        return out

    @cached_property
    def ancilla_superop(self) -> np.ndarray:
        """Linear map from ``vec(rho_X)`` to ``vec(rho_Y')`` (post-collision ancilla)."""
        d = self.system_dim
        dy = self.ancilla_dim
        u = self.unitary
        out = np.zeros((dy * dy, d * d), dtype=complex)
        for col in range(d * d):
            basis = np.zeros(d * d, dtype=complex)
            basis[col] = 1.0
            joint = u @ np.kron(basis.reshape(d, d), self.rho_y) @ linalg.dag(u)
            out[:, col] = linalg.partial_trace(joint, [d, dy], [1]).reshape(-1)
        return out


def full_collision_unitary(model: CM2Model) -> np.ndarray:
    """Ordered product of the embedded stage unitaries, later stages on the left."""
    dims = model.dims
    total = int(np.prod(dims))
    u = np.eye(total, dtype=complex)
    for j, stage_u in model.stages:
        u = linalg.embed(stage_u, dims, [0, j + 1]) @ u
    return u


# -- validation --------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    measurement_condition: bool | None = None
    measurement_residual: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [{"check": k, "norm": v} for k, v in self.violations],
            "warnings": list(self.warnings),
            "measurement_condition": self.measurement_condition,
            "measurement_residual": self.measurement_residual,
            "conditional_flux_equals_unconditional": bool(self.measurement_condition),
        }

    def summary(self) -> str:
        lines = ["PASS" if self.ok else "FAIL"]
        for k, v in self.violations:
            lines.append(f"  violation: {k} (norm {v:.3e})")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        if self.measurement_condition is not None:
            state = "holds" if self.measurement_condition else "fails"
            lines.append(
                f"  measurement condition {state} (residual {self.measurement_residual:.3e});"
                f" conditional flux {'equals' if self.measurement_condition else 'may differ from'}"
                " unconditional flux"
            )
        return "\n".join(lines)


def validate(model: CM2Model) -> ValidationReport:
    """Check every physical invariant of ``model`` and report all violations."""
    rep = ValidationReport()
    for k, v in density_problems(model.rho_x0):
        rep.violations.append((f"rho_x0: {k}", v))
    for j, u in enumerate(model.ancilla_units):
        for k, v in density_problems(u):
            rep.violations.append((f"ancilla unit {j}: {k}", v))
        if not density_problems(u):
            rank = int(np.sum(np.linalg.eigvalsh(u) > linalg.EIG_FLOOR))
            if rank < u.shape[0]:
                rep.warnings.append(
                    f"ancilla unit {j} is rank deficient ({rank}/{u.shape[0]}); "
                    "its entropy flux may be infinite"
                )
    for k, (j, u) in enumerate(model.stages):
        err = float(np.max(np.abs(u @ linalg.dag(u) - np.eye(u.shape[0]))))
        if err > UNITARY_TOL:
            rep.violations.append((f"stage {k} unitary is not unitary", err))
    dy = model.ancilla_dim
    comp = sum(linalg.dag(m) @ m for m in model.measurement_ops)
    err = float(np.max(np.abs(comp - np.eye(dy))))
    if err > COMPLETENESS_TOL:
        rep.violations.append(("measurement completeness sum M^dag M = I", err))

    if rep.ok:
        from .thermo import check_measurement_condition

        cond = check_measurement_condition(model)
        rep.measurement_condition = cond.holds
        rep.measurement_residual = cond.residual
    return rep


# -- JSON model files ----------------------------------------------------------


def model_schema() -> dict:
    text = resources.files("cm2sim").joinpath("schema/model.schema.json").read_text()
    return json.loads(text)


def _decode_matrix(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def _encode_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def model_from_dict(data: dict) -> CM2Model:
    import jsonschema

    try:
        jsonschema.validate(data, model_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidArgument(f"model file invalid at {where}: {exc.message}") from None
    model = CM2Model(
        rho_x0=_decode_matrix(data["rho_x0"]),
        ancilla_units=[_decode_matrix(u) for u in data["ancilla_units"]],
        stages=[(s["unit"], _decode_matrix(s["unitary"])) for s in data["collision_stages"]],
        measurement_ops=[_decode_matrix(m) for m in data["measurement_ops"]],
        labels=data.get("labels", []),
    )
    if model.system_dim != data["system_dim"]:
        raise InvalidArgument(
            f"system_dim is {data['system_dim']} but rho_x0 is {model.system_dim}-dimensional"
        )
    return model


def model_to_dict(model: CM2Model) -> dict:
    return {
        "system_dim": model.system_dim,
        "rho_x0": _encode_matrix(model.rho_x0),
        "ancilla_units": [_encode_matrix(u) for u in model.ancilla_units],
        "collision_stages": [{"unit": j, "unitary": _encode_matrix(u)} for j, u in model.stages],
        "measurement_ops": [_encode_matrix(m) for m in model.measurement_ops],
        "labels": list(model.labels),
    }


def load_model(path) -> CM2Model:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_dict(data)


def save_model(model: CM2Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def product_measurement(ops_per_unit: Sequence, unit_dims: Sequence[int], unit: int) -> list:
    """Kraus operators acting on one unit, identity on the others."""
    return [linalg.embed(m, unit_dims, [unit]) for m in ops_per_unit]
