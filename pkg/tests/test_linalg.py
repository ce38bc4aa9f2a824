import numpy as np
import pytest

from dfigsim.errors import NoConvergence, SingularMatrix
from dfigsim.linalg import eig2_sym, eig4_real, inv4, solve4
from dfigsim.plant import build_A_B


def test_solve4_identity():
    b = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.allclose(solve4(np.eye(4), b), b, atol=0.0)


def test_solve4_diagonal():
    m = np.diag([2.0, 4.0, 5.0, 10.0])
    b = np.array([2.0, 4.0, 5.0, 10.0])
    assert np.allclose(solve4(m, b), np.ones(4), atol=0.0)


def test_solve4_multiply_back_residual():
    rng = np.random.default_rng(42)
    for _ in range(50):
        m = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
        b = rng.normal(size=4)
        x = solve4(m, b)
        assert np.max(np.abs(m @ x - b)) < 1e-9 * (1.0 + np.max(np.abs(b)))


def test_solve4_singular_raises():
    m = np.eye(4)
    m[2, 2] = 0.0
    with pytest.raises(SingularMatrix):
        solve4(m, np.ones(4))


def test_solve4_mixed_magnitudes(params, gains):
    # entries of order 1 and 1e4, like the closed electrical loop
    a, b = build_A_B(params)
    a_cl = a - b @ gains.K
    rhs = np.array([1.0, 0.0, 12.0, -7.0])
    x = solve4(a_cl, rhs)
    assert np.max(np.abs(a_cl @ x - rhs)) < 1e-9 * (1.0 + np.max(np.abs(rhs)))


def test_inv4_roundtrip():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
    assert np.max(np.abs(inv4(m) @ m - np.eye(4))) < 1e-12 * np.abs(m).max()


def test_eig2_sym_identity():
    vals, vecs = eig2_sym(np.eye(2))
    assert np.allclose(vals, [1.0, 1.0])
    assert np.allclose(vecs @ vecs.T, np.eye(2), atol=1e-12)


def test_eig2_sym_offdiagonal():
    vals, _ = eig2_sym(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(vals, [-1.0, 1.0], atol=1e-14)


def test_eig2_sym_reconstruction_and_convention():
    rng = np.random.default_rng(7)
    for _ in range(100):
        s = rng.normal(size=(2, 2))
        s = 0.5 * (s + s.T)
        vals, vecs = eig2_sym(s)
        assert vals[0] <= vals[1]
        recon = vecs @ np.diag(vals) @ vecs.T
        assert np.max(np.abs(recon - s)) < 1e-12
        assert np.max(np.abs(vecs.T @ vecs - np.eye(2))) < 1e-12
        for j in range(2):
            lead = vecs[0, j] if vecs[0, j] != 0.0 else vecs[1, j]
            assert lead > 0.0


def test_eig4_diagonal():
    eigs = eig4_real(np.diag([-1.0, -2.0, -3.0, -4.0]))
    assert np.allclose(sorted(eigs.real), [-4.0, -3.0, -2.0, -1.0], atol=1e-9)
    assert np.allclose(eigs.imag, 0.0, atol=1e-9)


def match_multiset(got, expected, tol):
    left = list(got)
    for want in expected:
        j = int(np.argmin([abs(g - want) for g in left]))
        assert abs(left[j] - want) < tol
        left.pop(j)


def test_eig4_rotation_block():
    m = np.zeros((4, 4))
    m[0, 1], m[1, 0] = 1.0, -1.0
    m[2, 2], m[3, 3] = -5.0, -6.0
    eigs = eig4_real(m)
    match_multiset(eigs, [1j, -1j, -5.0 + 0j, -6.0 + 0j], 1e-8)


def test_eig4_closed_loop_pole_placement(params, gains):
    a, b = build_A_B(params)
    eigs = eig4_real(a - b @ gains.K)
    assert np.all(eigs.real < 0.0)
    # printed feedback gains are rounded, so allow 10% of each pole modulus
    left = list(eigs)
    for want in (-20 - 5j, -20 + 5j, -15 + 0j, -10 + 0j):
        j = int(np.argmin([abs(g - want) for g in left]))
        assert abs(left[j] - want) <= 0.1 * abs(want)
        left.pop(j)


def test_eig4_residual_bound():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(4, 4)) * 3.0
    eigs = eig4_real(m)
    # residual of the characteristic polynomial at each returned root
    coeffs = np.poly(m)
    scale = np.max(np.abs(coeffs))
    for lam in eigs:
        assert abs(np.polyval(coeffs, lam)) < 1e-6 * scale


def test_eig4_similarity_invariance():
    rng = np.random.default_rng(19)
    m = rng.normal(size=(4, 4)) * 2.0
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    e1 = eig4_real(m)
    e2 = eig4_real(q @ m @ q.T)
    assert np.max(np.abs(np.sort_complex(e1) - np.sort_complex(e2))) < 1e-6


def test_eig4_no_convergence_budget():
    with pytest.raises(NoConvergence):
        eig4_real(np.diag([-1.0, -2.0, -3.0, -4.0]), max_iter=1)
