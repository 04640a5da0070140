"""Dense operator-algebra identities: projected inversion, finite-rank
reduction, and the two-block inversion formula.

All three act on plain complex matrices; the grid dimensions here are at
most a few thousand, so direct dense linear algebra is the honest tool.
"""

from __future__ import annotations

import numpy as np

from .green import DomainError


class SingularFactorError(np.linalg.LinAlgError):
    """A factor that the formula requires to be invertible is singular."""


def _cond_check(mat, name, cond_max=1e12):
    c = np.linalg.cond(mat)
    if not np.isfinite(c) or c > cond_max:
        raise SingularFactorError(f"{name} is numerically singular (cond={c:.2e})")


def jn_invert(a: np.ndarray, s: np.ndarray, proj_tol: float = 1e-10,
              sing_tol: float = 1e-10):
    """Invert A through the projection S: A^{-1} = (A+S)^{-1} + (A+S)^{-1} S B^{-1} S (A+S)^{-1}.

    B = S - S(A+S)^{-1}S restricted to range(S).  Returns (inverse, None) on
    success and (None, report) when B is singular there, which by the
    projected-inversion criterion certifies that A itself is singular.
    """
    a = np.asarray(a, dtype=complex)
    s = np.asarray(s, dtype=complex)
    if np.linalg.norm(s @ s - s) > proj_tol * max(1.0, np.linalg.norm(s)):
        raise DomainError("S is not a projection (S^2 != S)")
    aps = a + s
    _cond_check(aps, "A + S")
    aps_inv = np.linalg.inv(aps)
    if not s.any():
        return aps_inv, None
    b = s - s @ aps_inv @ s
    # orthonormal basis of range(S)
    u, sv, _ = np.linalg.svd(s)
    rank = int(np.sum(sv > sing_tol * sv[0]))
    basis = u[:, :rank]
    b_small = basis.conj().T @ b @ basis
    sv_b = np.linalg.svd(b_small, compute_uv=False)
    if sv_b[-1] < sing_tol * max(1.0, sv_b[0]):
        return None, {"verdict": "singular", "smallest_singular_value": float(sv_b[-1])}
    b_pinv = basis @ np.linalg.inv(b_small) @ basis.conj().T
    return aps_inv + aps_inv @ s @ b_pinv @ s @ aps_inv, None


def deift_reduce(l_tilde: np.ndarray, b_cols: np.ndarray, gamma_hat: np.ndarray,
                 a_rows: np.ndarray):
    """N x N inverse factor F = (1 + <A|L|B> Ghat)^{-1} of the finite-rank reduction.

    Exposes the identity <A|(1 + L|B> Ghat <A|)^{-1} = F <A| via
    ``reduction_residual``.
    """
    small = np.eye(gamma_hat.shape[0]) + a_rows @ l_tilde @ b_cols @ gamma_hat
    _cond_check(small, "1 + <A|L|B>Ghat")
    return np.linalg.inv(small)


def reduction_residual(l_tilde, b_cols, gamma_hat, a_rows) -> float:
    """Residual of the reduction identity against brute-force dense inversion."""
    m = l_tilde.shape[0]
    big = np.eye(m) + l_tilde @ b_cols @ gamma_hat @ a_rows
    lhs = a_rows @ np.linalg.inv(big)
    rhs = deift_reduce(l_tilde, b_cols, gamma_hat, a_rows) @ a_rows
    return float(np.linalg.norm(lhs - rhs))


def block_inverse(v: np.ndarray, z: np.ndarray, upper_size: int = 0):
    """(V^{-1} + Z)^{-1} as the only nonzero (lower-right) block.

    Z is the lower-right block of the partitioned matrix; the upper blocks
    W, X, Y do not enter the result.  With upper_size > 0 the block is
    embedded in the zero-padded square matrix of the full partition.
    """
    v = np.asarray(v, dtype=complex)
    z = np.asarray(z, dtype=complex)
    _cond_check(v, "V")
    n2 = v.shape[0]
    _cond_check(np.eye(n2) + v @ z, "1 + VZ")
    lower_right = np.linalg.inv(np.linalg.inv(v) + z)
    if upper_size == 0:
        return lower_right
    out = np.zeros((upper_size + n2, upper_size + n2), dtype=complex)
    out[upper_size:, upper_size:] = lower_right
    return out


def block_inverse_bruteforce(v, w, x, y, z):
    """Oracle: (1 + diag(0, V) [[W, X], [Y, Z]])^{-1} diag(0, V) by dense inversion."""
    v = np.asarray(v, dtype=complex)
    n1 = np.asarray(w).shape[0]
    n2 = v.shape[0]
    big = np.block([[np.asarray(w, dtype=complex), np.asarray(x, dtype=complex)],
                    [np.asarray(y, dtype=complex), np.asarray(z, dtype=complex)]])
    bmat = np.zeros((n1 + n2, n1 + n2), dtype=complex)
    bmat[n1:, n1:] = v
    return np.linalg.inv(np.eye(n1 + n2) + bmat @ big) @ bmat
