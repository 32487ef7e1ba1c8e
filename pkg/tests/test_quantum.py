"""Two-qubit state helpers: bases, metrics, concurrence."""

import numpy as np
import pytest

from dispersim import quantum as q
from dispersim.model import SIGN_Q1, SIGN_Q2


def random_pure_state(rng, dim=4):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_density(rng, dim=4, rank=4):
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def test_basis_order():
    assert q.BASIS_LABELS == ("gg", "ge", "eg", "ee")
    for i, label in enumerate(q.BASIS_LABELS):
        assert q.basis_state(label)[i] == 1.0
    # first letter is qubit 1
    assert np.allclose(np.diag(q.SZ1), SIGN_Q1)
    assert np.allclose(np.diag(q.SZ2), SIGN_Q2)


def test_lowering_operators():
    # sm1 maps e->g on qubit 1 only: |eg> -> |gg>, |ee> -> |ge>
    assert q.SM1[0, 2] == 1.0 and q.SM1[1, 3] == 1.0 and np.count_nonzero(q.SM1) == 2
    assert q.SM2[0, 1] == 1.0 and q.SM2[2, 3] == 1.0 and np.count_nonzero(q.SM2) == 2


def test_bell_state_parity():
    assert np.allclose(q.SZ1SZ2 @ q.phi_plus(), -q.phi_plus())
    assert np.allclose(q.SZ1SZ2 @ q.phi_minus(), -q.phi_minus())
    assert np.allclose(q.SZ1SZ2 @ q.psi_plus(), q.psi_plus())
    assert np.allclose(q.SZ1SZ2 @ q.psi_minus(), q.psi_minus())


def test_product_plus_is_uniform():
    assert np.allclose(q.product_plus(), 0.5)


def test_fidelity_and_trace_distance(rng):
    psi = random_pure_state(rng)
    rho = q.density(psi)
    assert q.fidelity(rho, psi) == pytest.approx(1.0, abs=1e-12)
    assert q.trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-12)
    # orthogonal pure states are at maximal distance
    assert q.trace_distance(
        q.density(q.phi_plus()), q.density(q.phi_minus())
    ) == pytest.approx(1.0, abs=1e-12)


def test_purity_range(rng):
    rho = random_density(rng)
    assert 0.25 <= q.purity(rho) <= 1.0
    assert q.purity(q.density(q.psi_plus())) == pytest.approx(1.0)
    assert q.purity(np.eye(4) / 4.0) == pytest.approx(0.25)


def test_concurrence_known_values(rng):
    assert q.concurrence(q.density(q.phi_plus())) == pytest.approx(1.0, abs=1e-9)
    assert q.concurrence(q.density(q.psi_plus())) == pytest.approx(1.0, abs=1e-9)
    assert q.concurrence(q.density(q.product_plus())) == pytest.approx(0.0, abs=1e-9)
    # Werner state: C = max(0, (3p - 1) / 2)
    bell = q.density(q.psi_plus())
    for p in (0.2, 1.0 / 3.0, 0.6, 0.9):
        rho = p * bell + (1.0 - p) * np.eye(4) / 4.0
        assert q.concurrence(rho) == pytest.approx(max(0.0, (3 * p - 1) / 2), abs=1e-9)


def test_concurrence_batch_matches_scalar(rng):
    rhos = np.stack([random_density(rng, rank=r) for r in (1, 2, 3, 4)])
    batch = q.concurrence_batch(rhos)
    scalar = [q.concurrence(r) for r in rhos]
    assert np.allclose(batch, scalar, atol=1e-10)


def test_concurrence_local_unitary_invariance(rng):
    theta = 0.7
    u1 = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    u = np.kron(u1, np.eye(2))
    # mixed full-rank state: the sqrt eigenvalue problem is well conditioned
    werner = 0.6 * q.density(q.psi_plus()) + 0.4 * np.eye(4) / 4.0
    assert q.concurrence(u @ werner @ u.conj().T) == pytest.approx(
        q.concurrence(werner), abs=1e-9
    )
    # pure Bell state: zero eigenvalues of rho rho~ amplify fp noise through
    # the square root, so the achievable tolerance is sqrt(machine eps)
    bell = q.density(q.phi_plus())
    assert q.concurrence(u @ bell @ u.conj().T) == pytest.approx(
        q.concurrence(bell), abs=1e-7
    )


def test_dissipator_is_trace_free(rng):
    rho = random_density(rng)
    for c in (q.SM1, q.SZ1SZ2, q.SM1 + 0.5j * q.SM2):
        assert abs(np.trace(q.dissipator(c, rho))) < 1e-12


def test_assert_density_matrix_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        q.assert_density_matrix(np.eye(4))  # trace 4
    bad = np.eye(4, dtype=complex) / 4.0
    bad[0, 1] = 0.3  # not Hermitian
    with pytest.raises(ValueError):
        q.assert_density_matrix(bad)


def test_min_eigenvalue(rng):
    rho = random_density(rng)
    assert q.min_eigenvalue(rho) >= -1e-12
    assert q.min_eigenvalue(q.density(q.phi_plus())) == pytest.approx(0.0, abs=1e-12)
