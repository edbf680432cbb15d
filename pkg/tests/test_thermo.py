import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cm2sim import ensemble, presets, thermo
from cm2sim.dynamics import enumerate_exact
from cm2sim.errors import MeasurementConditionError
from cm2sim.model import CM2Model
from cm2sim.random_models import random_density, random_model

import oracle

SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)
seeds = st.integers(0, 2**32 - 1)

# frozen from the brute-force oracle in tests/oracle.py (single-qubit preset from |x+>)
G1 = 0.00680898173428883
DSIGMA_U1 = 0.12057067748973947
DSIGMA_C1 = 0.11376169575545064
BOUND2 = 0.007315971888399829
DSIGMA_C2 = 0.08354555135699827


def xbasis_model():
    plus = np.full((2, 2), 0.5, dtype=complex)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)
    return CM2Model(presets.xplus(), [presets.thermal_qubit(0.3)], [(0, presets.partial_swap(0.3))],
                    [plus, minus], ["+", "-"])


def trivial_measurement(m):
    return CM2Model(m.rho_x0, m.ancilla_units, m.stages, [np.eye(m.ancilla_dim)], ["all"])


def test_binary_entropy_oracle():
    h = -0.3 * math.log(0.3) - 0.7 * math.log(0.7)
    assert h == pytest.approx(0.610864, abs=5e-7)
    assert thermo.vn_entropy(np.diag([0.3, 0.7])) == pytest.approx(h, abs=1e-14)


def test_entropy_examples():
    assert thermo.vn_entropy(np.eye(2) / 2) == pytest.approx(math.log(2))
    assert thermo.vn_entropy(presets.xplus()) == pytest.approx(0.0, abs=1e-12)


@given(seeds, st.integers(1, 6))
def test_entropy_bounds(seed, d):
    s = thermo.vn_entropy(random_density(d, np.random.default_rng(seed)))
    assert -1e-12 <= s <= math.log(d) + 1e-12


def test_relative_entropy_examples(rng):
    rho = random_density(3, rng)
    assert thermo.rel_entropy(rho, rho) == pytest.approx(0.0, abs=1e-12)
    assert thermo.rel_entropy(KET0, np.eye(2) / 2) == pytest.approx(math.log(2))
    assert thermo.rel_entropy(np.eye(2) / 2, KET0) == math.inf


@given(seeds)
def test_relative_entropy_nonnegative_and_stacked(seed):
    r = np.random.default_rng(seed)
    sigma = random_density(3, r)
    states = np.stack([random_density(3, r) for _ in range(4)])
    vals = thermo.rel_entropies(states, sigma)
    assert np.all(vals >= -1e-12)
    assert np.allclose(vals, [thermo.rel_entropy(s, sigma) for s in states], atol=1e-12)


def test_mutual_information_examples(rng):
    a, b = random_density(2, rng), random_density(3, rng)
    assert thermo.mutual_information(np.kron(a, b), [2, 3]) == pytest.approx(0.0, abs=1e-12)
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert thermo.mutual_information(np.outer(phi, phi), [2, 2]) == pytest.approx(2 * math.log(2))


def test_holevo_examples(rng):
    rho = random_density(2, rng)
    assert thermo.holevo([0.2, 0.8], np.stack([rho, rho])) == pytest.approx(0.0, abs=1e-12)
    assert thermo.holevo([0.5, 0.5], np.stack([KET0, KET1])) == pytest.approx(math.log(2))
    # after one full SWAP every branch holds the ancilla state
    m = CM2Model(presets.xplus(), [presets.thermal_qubit(0.3)], [(0, SWAP)],
                 presets.computational_projectors(2), ["0", "1"])
    assert thermo.holevo(enumerate_exact(m, 1)[1]) == pytest.approx(0.0, abs=1e-12)


@given(seeds, st.integers(1, 4))
def test_holevo_forms_agree(seed, steps):
    m = random_model(np.random.default_rng(seed))
    e = enumerate_exact(m, steps)[-1]
    chi = thermo.holevo(e)
    assert chi >= -1e-10
    assert abs(chi - thermo.holevo_relative_form(e)) < 1e-10


def test_gain_loss_equilibrium_zero():
    m = presets.single_qubit_model(rho_x0=presets.thermal_qubit(0.3))
    ens = enumerate_exact(m, 6)
    for e in ens[:-1]:
        r = thermo.gain_loss(e, m)
        assert max(abs(r.G), abs(r.L), abs(r.dI)) < 1e-12


def test_trivial_measurement_no_gain():
    m = trivial_measurement(presets.two_qubit_model())
    for e in enumerate_exact(m, 5)[:-1]:
        assert abs(thermo.gain_loss(e, m).G) < 1e-12


def test_first_step_gain_regression():
    m = presets.single_qubit_model()
    r = thermo.gain_loss(enumerate_exact(m, 0)[0], m)
    assert r.G == pytest.approx(G1, abs=1e-12)
    assert r.L == pytest.approx(0.0, abs=1e-12)
    assert r.dI == pytest.approx(G1, abs=1e-12)


def test_production_identity_collision(rng):
    m = CM2Model(presets.xplus(), [presets.thermal_qubit(0.3)], [(0, np.eye(4))],
                 presets.computational_projectors(2), ["0", "1"])
    p = thermo.delta_sigma_u(random_density(2, rng), m)
    assert abs(p.dSigma_u) < 1e-12 and abs(p.dPhi_u) < 1e-12


def test_production_full_swap_at_equilibrium():
    m = CM2Model(presets.xplus(), [presets.thermal_qubit(0.3)], [(0, SWAP)],
                 presets.computational_projectors(2), ["0", "1"])
    p = thermo.delta_sigma_u(presets.thermal_qubit(0.3), m)
    assert abs(p.dSigma_u) < 1e-12 and abs(p.dPhi_u) < 1e-12


def test_first_step_production_regression():
    m = presets.single_qubit_model()
    p = thermo.delta_sigma_u(m.rho_x0, m)
    assert p.dSigma_u == pytest.approx(DSIGMA_U1, abs=1e-12)
    assert p.dSigma_u == pytest.approx(p.dS + p.dPhi_u, abs=1e-12)


@pytest.mark.parametrize("f", [0.1, 0.3, 0.45, 0.8])
def test_flux_is_beta_times_heat(f):
    # rho_Y = exp(-beta H)/Z with H = -sigma_z puts f on |0>, so beta = ln(f/(1-f))/2
    m = presets.single_qubit_model(f=f)
    p = thermo.delta_sigma_u(m.rho_x0, m)
    h = -np.diag([1.0, -1.0])
    beta = 0.5 * math.log(f / (1 - f))
    heat = np.trace((p.rho_y_post - m.rho_y) @ h).real
    assert p.dPhi_u == pytest.approx(beta * heat, abs=1e-12)


@given(seeds)
def test_flux_additivity_full_rank(seed):
    r = np.random.default_rng(seed)
    m = random_model(r, n_units=2)
    p = thermo.delta_sigma_u(random_density(2, r), m)
    assert abs(sum(p.dPhi_u_per_unit) - p.dPhi_u) < 1e-10
    assert p.dSigma_u >= -1e-10
    assert not any(p.divergent)


def test_pure_unit_flagged_divergent():
    m = presets.two_qubit_model()
    p = thermo.delta_sigma_u(m.rho_x0, m)
    assert p.divergent == (False, True)
    assert p.dSigma_u_full == math.inf and p.dPhi_u_full == math.inf
    assert math.isfinite(p.dSigma_u)
    assert thermo.rel_entropy(p.rho_y_post, m.rho_y) == math.inf


def test_pure_unit_regularized_is_finite():
    m = presets.two_qubit_model(epsilon_mix=1e-3)
    p = thermo.delta_sigma_u(m.rho_x0, m)
    assert not any(p.divergent)
    assert abs(sum(p.dPhi_u_per_unit) - p.dPhi_u) < 1e-10


def test_conditional_flux_examples():
    m = presets.single_qubit_model()
    post = thermo.delta_sigma_u(m.rho_x0, m).rho_y_post
    c = thermo.delta_phi_c(post, m)
    assert c.condition_holds
    assert c.dPhi_c == pytest.approx(thermo.delta_sigma_u(m.rho_x0, m).dPhi_u, abs=1e-12)

    mt = trivial_measurement(m)
    assert thermo.delta_phi_c(post, mt).dPhi_c == pytest.approx(thermo.entropy_flux(mt, post).total, abs=1e-14)

    mx = xbasis_model()
    tilde = thermo.reconstructed_ancilla(post, mx)
    assert np.allclose(np.diag(tilde).real, 0.5)
    cx = thermo.delta_phi_c(post, mx)
    assert not cx.condition_holds
    assert abs(cx.dPhi_c - thermo.entropy_flux(mx, post).total) > 1e-3


def test_measurement_condition_check():
    assert thermo.check_measurement_condition(presets.single_qubit_model()).holds
    assert thermo.check_measurement_condition(presets.two_qubit_model()).holds
    assert thermo.check_measurement_condition(trivial_measurement(presets.single_qubit_model())).holds
    mc = thermo.check_measurement_condition(xbasis_model())
    assert not mc.holds and mc.residual > 1e-3


def test_conditional_production_rules():
    assert thermo.delta_sigma_c(0.25, 0.0) == 0.25
    assert thermo.delta_sigma_c(0.0, 0.0) == 0.0
    with pytest.raises(MeasurementConditionError):
        thermo.delta_sigma_c(0.1, 0.0, condition_holds=False)


def test_bound_examples():
    m = trivial_measurement(presets.single_qubit_model())
    prev = enumerate_exact(m, 1)[1]
    b = thermo.bound_rhs(prev, m)
    assert b.info_past == pytest.approx(0.0, abs=1e-12)
    p = thermo.delta_sigma_u(prev.mean_state(), m)
    assert b.value == pytest.approx(p.ancilla_rel_entropy, abs=1e-12)
    assert p.dSigma_u >= b.value

    eq = presets.single_qubit_model(rho_x0=presets.thermal_qubit(0.3))
    assert thermo.bound_rhs(enumerate_exact(eq, 1)[1], eq).value == pytest.approx(0.0, abs=1e-12)


def test_second_step_bound_regression():
    m = presets.single_qubit_model()
    run = thermo.exact_series(m, 2)
    v, ex = run.series.values, run.series.extras
    assert ex["bound_rhs"][2] == pytest.approx(BOUND2, abs=1e-12)
    assert v["dSigma_c"][1] == pytest.approx(DSIGMA_C1, abs=1e-12)
    assert v["dSigma_c"][2] == pytest.approx(DSIGMA_C2, abs=1e-12)
    assert v["dSigma_c"][2] >= ex["bound_rhs"][2]
    assert math.isfinite(ex["bound_rhs_current"][2])


def test_exact_single_qubit_all_checks():
    checks = thermo.verify_exact(thermo.exact_series(presets.single_qubit_model(), 10))
    assert all(c.margin >= -1e-9 for c in checks), [c for c in checks if not c.ok]


def test_exact_equilibrium_all_zero():
    run = thermo.exact_series(presets.single_qubit_model(rho_x0=presets.thermal_qubit(0.3)), 6)
    v = run.series.values
    for k in ("G", "L", "dI", "dSigma_u", "dSigma_c", "dPhi_u", "dPhi_c"):
        assert np.max(np.abs(v[k][1:])) < 1e-12, k
    assert np.max(run.series.extras["marginal_residual"]) < 1e-10


@settings(max_examples=15)
@given(seeds, st.integers(1, 4))
def test_exact_invariants_random(seed, steps):
    run = thermo.exact_series(random_model(np.random.default_rng(seed)), steps)
    bad = [c for c in thermo.verify_exact(run) if not c.ok]
    assert not bad
    v = run.series.values
    assert np.allclose(v["I"], v["S_u"] - v["S_c"], atol=1e-12)


def test_integrated_identity_on_presets():
    run = thermo.exact_series(presets.two_qubit_model(), 8)
    v = run.series.values
    assert np.max(np.abs(v["Sigma_u_int"] - v["Sigma_c_int"] - v["I"])) < 1e-10
    assert np.all(v["Sigma_u_int"] - v["Sigma_c_int"] >= -1e-10)


def test_iss_verdicts_ensemble():
    eq = thermo.iss_detect(ensemble.run_ensemble(presets.single_qubit_model(), 100, 400, 1))
    assert eq.verdict == "equilibrium"
    iss = thermo.iss_detect(ensemble.run_ensemble(presets.two_qubit_model(), 200, 400, 1))
    assert iss.verdict == "ISS"
    ness = thermo.iss_detect(ensemble.run_ensemble(trivial_measurement(presets.two_qubit_model()), 200, 50, 1))
    assert ness.verdict == "NESS-unconditional-only"


def test_iss_transient_while_gain_decays():
    r = thermo.iss_detect(ensemble.run_ensemble(presets.single_qubit_model(), 20, 400, 1))
    assert r.verdict == "transient"


def test_iss_thresholds_override():
    s = ensemble.run_ensemble(presets.two_qubit_model(), 200, 200, 1)
    assert thermo.iss_detect(s, eps_G=1e-3).verdict == "NESS-unconditional-only"
    assert thermo.iss_detect(s, eps_I=1e-9).verdict == "transient"


def test_iss_detect_needs_window():
    s = thermo.exact_series(presets.single_qubit_model(), 1).series
    with pytest.raises(ValueError):
        thermo.iss_detect(s)


def test_oracle_partial_swap_matches_preset():
    for g in (0.0, 0.3, 1.2, math.pi / 2):
        assert np.max(np.abs(oracle.partial_swap_expm(g) - presets.partial_swap(g))) < 1e-12
