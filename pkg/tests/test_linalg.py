import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cm2sim import linalg
from cm2sim.errors import InvalidArgument, InvalidState
from cm2sim.random_models import random_density

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
KET0 = np.diag([1.0, 0.0]).astype(complex)
KET1 = np.diag([0.0, 1.0]).astype(complex)

seeds = st.integers(0, 2**32 - 1)


def test_tensor_identities():
    assert np.allclose(linalg.tensor(np.eye(2), np.eye(2)), np.eye(4))
    m = linalg.tensor(KET0, KET1)
    expected = np.zeros((4, 4))
    expected[1, 1] = 1.0
    assert np.array_equal(m, expected)


def test_tensor_slow_index_flip():
    ket00 = np.array([1, 0, 0, 0], dtype=complex)
    assert np.allclose(linalg.tensor(SX, np.eye(2)) @ ket00, [0, 0, 1, 0])


@given(seeds)
def test_tensor_associative(seed):
    r = np.random.default_rng(seed)
    a, b, c = (r.normal(size=(2, 2)) + 1j * r.normal(size=(2, 2)) for _ in range(3))
    assert np.max(np.abs(linalg.tensor(linalg.tensor(a, b), c) - linalg.tensor(a, linalg.tensor(b, c)))) < 1e-12


@given(seeds, st.sampled_from([(2, 2), (2, 3), (3, 2), (2, 2, 2)]))
def test_partial_trace_recovers_factors(seed, dims):
    r = np.random.default_rng(seed)
    parts = [random_density(d, r) for d in dims]
    full = linalg.tensor(*parts)
    for k, p in enumerate(parts):
        red = linalg.partial_trace(full, dims, [k])
        assert np.max(np.abs(red - p)) < 1e-12
    assert abs(np.trace(linalg.partial_trace(full, dims, [0])) - 1) < 1e-12


def test_partial_trace_bell_state():
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert np.allclose(linalg.partial_trace(np.outer(phi, phi), [2, 2], [0]), np.eye(2) / 2)


def test_partial_trace_after_full_swap(rng):
    swap = np.eye(4)[[0, 2, 1, 3]]
    a, b = random_density(2, rng), random_density(2, rng)
    out = swap @ np.kron(a, b) @ swap.T
    assert np.allclose(linalg.partial_trace(out, [2, 2], [0]), b, atol=1e-12)


def test_partial_trace_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        linalg.partial_trace(np.eye(4), [2, 3], [0])
    with pytest.raises(InvalidArgument):
        linalg.partial_trace(np.eye(4), [2, 2], [])


def test_partial_trace_keeps_order():
    a, b, c = np.diag([1, 0]), np.diag([0.5, 0.5]), np.diag([0.2, 0.8])
    full = linalg.tensor(a, b, c)
    assert np.allclose(linalg.partial_trace(full, [2, 2, 2], [0, 2]), np.kron(a, c))


def test_embed_matches_kron():
    u = np.arange(16).reshape(4, 4).astype(complex)
    assert np.allclose(linalg.embed(u, [2, 2, 2], [0, 1]), np.kron(u, np.eye(2)))
    swap = np.eye(4)[[0, 2, 1, 3]]
    e = linalg.embed(u, [2, 2, 2], [0, 2])
    assert np.allclose(e, np.kron(np.eye(2), swap) @ np.kron(u, np.eye(2)) @ np.kron(np.eye(2), swap))


@pytest.mark.parametrize("h, vals", [(SZ, [-1, 1]), (SX, [-1, 1]), (np.diag([0.3, 0.7]), [0.3, 0.7])])
def test_eig_examples(h, vals):
    w, v = linalg.eig_hermitian(h)
    assert np.allclose(w, vals)
    assert np.allclose(v @ np.diag(w) @ v.conj().T, h, atol=1e-10)


def test_eig_sx_eigenvectors():
    _, v = linalg.eig_hermitian(SX)
    xm = np.array([1, -1]) / math.sqrt(2)
    xp = np.array([1, 1]) / math.sqrt(2)
    assert abs(abs(np.vdot(v[:, 0], xm)) - 1) < 1e-12
    assert abs(abs(np.vdot(v[:, 1], xp)) - 1) < 1e-12


@given(seeds, st.integers(1, 16))
def test_eig_reconstruction(seed, d):
    r = np.random.default_rng(seed)
    a = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    h = a + a.conj().T
    w, v = linalg.eig_hermitian(h)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(v @ np.diag(w) @ v.conj().T - h)) < 1e-10


def test_eig_rejects_non_hermitian():
    with pytest.raises(InvalidArgument):
        linalg.eig_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_log_on_support_examples():
    assert np.allclose(linalg.log_on_support(np.eye(2) / 2), math.log(0.5) * np.eye(2))
    assert np.allclose(linalg.log_on_support(KET0), 0.0)
    assert np.allclose(linalg.log_on_support(np.diag([0.3, 0.7])), np.diag(np.log([0.3, 0.7])))


def test_log_on_support_rejects_negative():
    with pytest.raises(InvalidState):
        linalg.log_on_support(np.diag([1.1, -0.1]))


def test_tiny_negative_eigenvalues_are_clamped():
    rho = np.diag([1.0 + 5e-10, -5e-10])
    assert linalg.entropy_from_eigenvalues(np.linalg.eigvalsh(rho)) == pytest.approx(0.0, abs=1e-8)


@given(seeds, st.integers(1, 6))
def test_log_trace_is_minus_entropy(seed, d):
    rho = random_density(d, np.random.default_rng(seed))
    w = np.linalg.eigvalsh(rho)
    s = -float(np.sum(w * np.log(w)))
    assert abs(np.real(np.trace(linalg.log_on_support(rho) @ rho)) + s) < 1e-10


def test_batched_entropies_match_single(rng):
    states = np.stack([random_density(3, rng) for _ in range(5)])
    one = [float(linalg.entropy_from_eigenvalues(np.linalg.eigvalsh(s))) for s in states]
    assert np.allclose(linalg.entropies(states), one)
