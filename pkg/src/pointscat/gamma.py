"""The N x N interaction matrix, its bound states, and real-axis diagnostics.

Gamma(z) has diagonal alpha_j - iz/(4 pi) and off-diagonal minus the Green
kernel between centers; it is symmetric (not Hermitian) and entire in z.
Its zeros on the positive imaginary axis are the bound states of the
point-interaction Hamiltonian; on the real axis it is never singular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .green import FOUR_PI, DomainError, kernel_eval


@dataclass(frozen=True)
class PointConfig:
    """Interaction centers and strengths."""

    centers: tuple
    strengths: tuple

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        strengths = np.atleast_1d(np.asarray(self.strengths, dtype=float))
        if centers.shape[0] != strengths.shape[0] or centers.shape[0] < 1:
            raise DomainError("need one strength per center")
        if centers.shape[0] > 1:
            d = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
            if np.min(d[~np.eye(len(d), dtype=bool)]) <= 0:
                raise DomainError("centers must be pairwise distinct")
        object.__setattr__(self, "centers", tuple(map(tuple, centers)))
        object.__setattr__(self, "strengths", tuple(strengths))

    @property
    def n(self) -> int:
        return len(self.strengths)

    def center_array(self):
        return np.asarray(self.centers, dtype=float)

    def shifted(self, c: float) -> "PointConfig":
        return PointConfig(self.centers, tuple(a + c for a in self.strengths))

    def min_distance(self) -> float:
        if self.n == 1:
            return np.inf
        y = self.center_array()
        d = np.linalg.norm(y[:, None] - y[None, :], axis=-1)
        return float(np.min(d[~np.eye(self.n, dtype=bool)]))


@dataclass(frozen=True)
class GammaMatrix:
    order: int
    z: complex
    entries: np.ndarray

    def det(self) -> complex:
        return complex(np.linalg.det(self.entries))

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.entries)

    def smallest_singular_value(self) -> float:
        return float(np.linalg.svd(self.entries, compute_uv=False)[-1])


def build_gamma(config: PointConfig, z: complex) -> GammaMatrix:
    """Assemble Gamma(z); entire in z, symmetric for every z."""
    n = config.n
    y = config.center_array()
    mat = np.zeros((n, n), dtype=complex)
    for j in range(n):
        mat[j, j] = config.strengths[j] - 1j * z / FOUR_PI
        for l in range(j + 1, n):
            g = kernel_eval(z, y[j] - y[l])
            mat[j, l] = -g
            mat[l, j] = -g
    return GammaMatrix(n, complex(z), mat)


def det_on_imaginary_axis(config: PointConfig, kappa) -> np.ndarray:
    """det Gamma(i kappa), real for real strengths and kappa > 0."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    return np.array([build_gamma(config, 1j * k).det().real for k in kappa])


def _null_dimension(mat: np.ndarray, rel_tol: float = 1e-8) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv < rel_tol * sv[0]))


def find_bound_states(config: PointConfig, kappa_max: float,
                      grid_nodes: int = 200, tol: float = 1e-12):
    """Roots of det Gamma(i kappa) on (0, kappa_max]; energies are -kappa^2.

    Sign-change bracketing on a log-spaced kappa grid, bisection refinement,
    multiplicity from the numerical null space at the root.  At most N roots
    exist; a root sitting on a bracket edge is recovered by widening.
    """
    if kappa_max <= 0:
        raise DomainError("kappa_max must be positive")
    lo = min(1e-6, kappa_max / 1e6)
    grid = np.geomspace(lo, kappa_max, grid_nodes)
    vals = det_on_imaginary_axis(config, grid)
    roots = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            # root exactly on a grid node: widen the bracket slightly
            a_w = max(lo, a * (1 - 1e-6))
            b_w = min(kappa_max, a * (1 + 1e-6))
            roots.append(0.5 * (a_w + b_w))
            continue
        if fa * fb < 0:
            roots.append(brentq(
                lambda k: det_on_imaginary_axis(config, k)[0], a, b,
                xtol=tol, rtol=4 * np.finfo(float).eps))
    out = []
    for kappa in roots:
        mult = max(1, _null_dimension(build_gamma(config, 1j * kappa).entries))
        out.append((float(kappa), mult))
    if sum(m for _, m in out) > config.n:
        raise RuntimeError("more roots than centers: inconsistent scan")
    return out


def scan_real_axis(config: PointConfig, k_min: float, k_max: float,
                   nodes: int = 200) -> float:
    """Minimum over a real-k grid of the smallest singular value of Gamma(k)."""
    if not 0 < k_min < k_max:
        raise DomainError("need 0 < k_min < k_max")
    grid = np.linspace(k_min, k_max, nodes)
    return float(min(build_gamma(config, k).smallest_singular_value()
                     for k in grid))
