"""Small dense linear algebra for the 4-state electrical model.

Only the fixed sizes the plant and controller need: a pivoted 4x4 solve,
the eigendecomposition of a symmetric 2x2, and the four eigenvalues of a
real 4x4 via its characteristic polynomial.
"""

import warnings

import numpy as np
import scipy.linalg

from .errors import NoConvergence, SingularMatrix

PIVOT_TOL = 1e-12


def solve4(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve m @ x = b for a 4x4 system by LU with partial pivoting.

    Partial pivoting matters here: closed-loop matrices mix entries of
    order 1 with feedback-gain entries of order 1e4.

    Raises SingularMatrix if any pivot magnitude falls below PIVOT_TOL.
    """
    m = np.asarray(m, dtype=float)
    b = np.asarray(b, dtype=float)
    if m.shape != (4, 4) or b.shape != (4,):
        raise ValueError(f"expected 4x4 matrix and length-4 vector, got {m.shape} and {b.shape}")
    with warnings.catch_warnings():
        # the pivot check below raises its own, more precise error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if np.any(pivots <= PIVOT_TOL):
        raise SingularMatrix(f"pivot magnitude {pivots.min():.3e} below {PIVOT_TOL:.0e}")
    return scipy.linalg.lu_solve((lu, piv), b)


def inv4(m: np.ndarray) -> np.ndarray:
    """Inverse of a 4x4 matrix, column by column through solve4."""
    out = np.empty((4, 4))
    eye = np.eye(4)
    for j in range(4):
        out[:, j] = solve4(m, eye[:, j])
    return out


def eig2_sym(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric 2x2 matrix.

    Returns (eigvals, eigvecs) with eigenvalues ascending and eigenvectors
    on the columns, so that eigvecs @ diag(eigvals) @ eigvecs.T == s.
    Each eigenvector is normalised so its first nonzero entry is positive,
    which makes downstream factorizations reproducible across platforms.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {s.shape}")
    sym = 0.5 * (s + s.T)
    vals, vecs = np.linalg.eigh(sym)
    for j in range(2):
        col = vecs[:, j]
        lead = col[0] if col[0] != 0.0 else col[1]
        if lead < 0.0:
            vecs[:, j] = -col
    return vals, vecs


def _char_poly4(m: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial coefficients of a 4x4 matrix.

    Faddeev-LeVerrier recursion; avoids computing eigenvalues first.
    Returns [1, c3, c2, c1, c0] for det(lambda*I - m).
    """
    eye = np.eye(4)
    coeffs = np.empty(5)
    coeffs[0] = 1.0
    mk = np.array(m, dtype=float)
    c = -np.trace(mk)
    coeffs[1] = c
    for k in range(2, 5):
        mk = m @ (mk + c * eye)
        c = -np.trace(mk) / k
        coeffs[k] = c
    return coeffs


def eig4_real(m: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Four (complex) eigenvalues of a real 4x4 matrix.

    Roots of the characteristic polynomial by simultaneous Durand-Kerner
    iteration, sorted by (real, imag). Each root is checked against the
    polynomial residual; this is enough for the single 4x4 use case and
    avoids a general QR eigensolver.

    Raises NoConvergence if the iteration budget is exhausted.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
    coeffs = _char_poly4(m)

    def poly(z):
        return (((z + coeffs[1]) * z + coeffs[2]) * z + coeffs[3]) * z + coeffs[4]

    # Cauchy bound keeps the initial circle outside the root set.
    radius = 1.0 + np.max(np.abs(coeffs[1:]))
    roots = radius * (0.4 + 0.9j) ** np.arange(1, 5)
    for _ in range(max_iter):
        new = np.empty(4, dtype=complex)
        for k in range(4):
            denom = np.prod(roots[k] - np.delete(roots, k))
            new[k] = roots[k] - poly(roots[k]) / denom
        shift = np.max(np.abs(new - roots))
        roots = new
        if shift < 1e-13 * (1.0 + np.max(np.abs(roots))):
            break
    else:
        raise NoConvergence(f"root iteration did not settle in {max_iter} steps")

    scale = np.max(np.abs(coeffs))
    residuals = np.abs(poly(roots))
    if np.any(residuals > 1e-6 * scale):
        raise NoConvergence(f"root residual {residuals.max():.3e} exceeds 1e-6 * {scale:.3e}")
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]
