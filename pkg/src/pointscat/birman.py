"""Discretized Birman-Schwinger operators and threshold-resonance analysis.

A regular potential V supported in a ball is factored as V = a b with
a = |V|^{1/2}, b = |V|^{1/2} sign V.  The compact operator b G0(k) a is
discretized by a spherical product quadrature over the support ball.
Its zero-energy limit Q0 = 1 + b D0 a decides between the regular and
exceptional (threshold resonance / eigenvalue) cases; the exceptional
kernel produces the dual bases, the 1/|x| resonance profile, and the
effective point-interaction strength alpha.

The weakly singular diagonal of the D0 kernel is handled by singularity
subtraction: the Newton potential of the uniform ball is known in closed
form, so the diagonal entry absorbs the exact row integral minus the
off-diagonal quadrature.  This keeps the discrete kernel eigenvalue
convergent at better than second order, which the refinement-based
resonance test relies on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .green import FOUR_PI, DomainError

RESONANCE_THRESHOLD = 0.05


@dataclass(frozen=True)
class Potential:
    """Real potential with declared ball support and its a, b factors."""

    evaluator: object
    support_radius: float
    label: str = "custom"

    def __post_init__(self):
        if self.support_radius <= 0:
            raise DomainError("support radius must be positive")

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)))

    def a(self, x):
        return np.sqrt(np.abs(self(x)))

    def b(self, x):
        v = self(x)
        return np.sqrt(np.abs(v)) * np.sign(v)


_LABEL_RE = re.compile(r"^\s*(well|gaussian)\(\s*([^,)]+)\s*,\s*([^,)]+)\s*\)\s*$")


def potential_from_label(label: str) -> Potential:
    """Parse "well(depth,radius)" or "gaussian(depth,width)" into a Potential.

    Both are attractive for depth > 0: the well is -depth on the ball,
    the gaussian is -depth exp(-|x|^2 / (2 width^2)) truncated at 5 width.
    """
    m = _LABEL_RE.match(label)
    if not m:
        raise DomainError(f"unrecognized potential label: {label!r}")
    kind = m.group(1)
    try:
        p1, p2 = float(m.group(2)), float(m.group(3))
    except ValueError as err:
        raise DomainError(f"bad numeric field in label {label!r}") from err
    if p2 <= 0:
        raise DomainError("radius/width must be positive")
    if kind == "well":
        def well(x, depth=p1, radius=p2):
            r = np.linalg.norm(np.atleast_2d(x), axis=-1)
            return np.where(r <= radius, -depth, 0.0)
        return Potential(well, p2, label=f"well({p1},{p2})")
    def gaussian(x, depth=p1, width=p2):
        r2 = np.sum(np.atleast_2d(x) ** 2, axis=-1)
        inside = r2 <= (5.0 * width) ** 2
        return np.where(inside, -depth * np.exp(-r2 / (2.0 * width**2)), 0.0)
    return Potential(gaussian, 5.0 * p2, label=f"gaussian({p1},{p2})")


@dataclass(frozen=True)
class CouplingFamily:
    """Per-center coupling constants lambda_j(eps) = 1 + slope_j * eps."""

    slopes: tuple

    def __post_init__(self):
        slopes = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        object.__setattr__(self, "slopes", tuple(slopes))

    @property
    def n(self) -> int:
        return len(self.slopes)

    def value(self, eps: float):
        return 1.0 + np.asarray(self.slopes) * eps

    def single(self, j: int) -> "CouplingFamily":
        return CouplingFamily((self.slopes[j],))


@dataclass(frozen=True)
class NystromGrid:
    """Quadrature nodes/weights in the support ball with sampled a, b."""

    nodes: np.ndarray
    weights: np.ndarray
    a_vals: np.ndarray
    b_vals: np.ndarray
    support_radius: float
    resolution: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def inner(self, f, g) -> complex:
        """Discrete L^2 pairing (f, g), conjugate-linear in g."""
        return complex(np.sum(self.weights * np.asarray(f)
                              * np.conj(np.asarray(g))))


def build_nystrom(potential: Potential, resolution: int) -> NystromGrid:
    """Spherical product rule over the support ball, a and b sampled.

    Gauss-Legendre in the radius (the r^2 factor folded into the
    weights) and in cos(theta), uniform in the azimuth; resolution n
    gives n^3 nodes whose weights sum to the ball volume exactly.
    """
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    R = potential.support_radius
    r, wr = leggauss(resolution)
    r = 0.5 * R * (r + 1.0)
    wr = 0.5 * R * wr * r**2
    ct, wt = leggauss(resolution)
    st = np.sqrt(1.0 - ct**2)
    phi = 2.0 * np.pi * (np.arange(resolution) + 0.5) / resolution
    wphi = 2.0 * np.pi / resolution
    dirs = np.empty((resolution * resolution, 3))
    dirs[:, 0] = np.outer(st, np.cos(phi)).ravel()
    dirs[:, 1] = np.outer(st, np.sin(phi)).ravel()
    dirs[:, 2] = np.outer(ct, np.ones(resolution)).ravel()
    wdir = np.outer(wt, np.full(resolution, wphi)).ravel()
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = np.outer(wr, wdir).ravel()
    return NystromGrid(nodes, weights, potential.a(nodes), potential.b(nodes),
                       R, resolution)


def _d0_kernel(grid: NystromGrid) -> np.ndarray:
    """Matrix of the 1/(4 pi |x-y|) kernel with the subtraction diagonal.

    The diagonal entry is chosen so that each row integrates the constant
    function exactly against the Newton potential of the ball,
    int_{|y|<R} dy / (4 pi |x-y|) = (3 R^2 - |x|^2) / 6.
    """
    diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, 1.0)
    kern = 1.0 / (FOUR_PI * r)
    np.fill_diagonal(kern, 0.0)
    newton = (3.0 * grid.support_radius**2
              - np.sum(grid.nodes**2, axis=-1)) / 6.0
    diag = (newton - kern @ grid.weights) / grid.weights
    kern[np.diag_indices(grid.size)] = diag
    return kern


def _green_kernel(grid: NystromGrid, k: complex) -> np.ndarray:
    """G_k kernel matrix: subtraction diagonal for 1/r plus the smooth part."""
    kern = _d0_kernel(grid).astype(complex)
    diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, 1.0)
    smooth = (np.exp(1j * k * r) - 1.0) / (FOUR_PI * r)
    smooth[np.diag_indices(grid.size)] = 1j * k / FOUR_PI
    return kern + smooth


@dataclass(frozen=True)
class DiscreteOperator:
    """Complex matrix over one grid or an N-block product of grids."""

    matrix: np.ndarray
    block_sizes: tuple
    k: complex = 0.0
    eps: float = 0.0

    def __post_init__(self):
        total = sum(self.block_sizes)
        if self.matrix.shape != (total, total):
            raise DomainError("matrix shape inconsistent with block sizes")

    def block(self, i: int, j: int) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return self.matrix[off[i]:off[i + 1], off[j]:off[j + 1]]

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def bs_matrix(grid: NystromGrid, lam: float, k: complex) -> DiscreteOperator:
    """Nystrom matrix of lam * b G0(k) a on the grid."""
    kern = _green_kernel(grid, k)
    mat = lam * grid.b_vals[:, None] * kern * (grid.a_vals * grid.weights)[None, :]
    return DiscreteOperator(mat, (grid.size,), k=complex(k))


def zero_energy_terms(grid: NystromGrid):
    """(b D0 a, b D1 a): the zero-energy kernel and the rank-one 1/(4 pi)."""
    kern = _d0_kernel(grid)
    d0 = grid.b_vals[:, None] * kern * (grid.a_vals * grid.weights)[None, :]
    d1 = np.outer(grid.b_vals, grid.a_vals * grid.weights) / FOUR_PI
    return (DiscreteOperator(d0.astype(complex), (grid.size,)),
            DiscreteOperator(d1.astype(complex), (grid.size,)))


def _weighted_singulars(grid: NystromGrid, mat: np.ndarray, vectors=False):
    """SVD of 1 + mat in the weighted l^2 of the grid."""
    sw = np.sqrt(grid.weights)
    sym = np.eye(grid.size) + (sw[:, None] / sw[None, :]) * mat
    if not vectors:
        return np.linalg.svd(sym, compute_uv=False)
    u, s, vh = np.linalg.svd(sym)
    # right singular vectors mapped back from the weighted coordinates
    return s, (vh.conj().T / sw[:, None])


@dataclass(frozen=True)
class ThresholdReport:
    classification: str
    singular_values: np.ndarray
    trace: tuple
    phis: np.ndarray
    psis: np.ndarray
    l_values: np.ndarray
    alpha: float
    grid: NystromGrid
    notes: str = ""

    @property
    def kernel_dimension(self) -> int:
        return self.phis.shape[1] if self.phis.size else 0


def _dual_normalize(grid: NystromGrid, kern: np.ndarray, raw_phis: np.ndarray):
    """Gram-normalize kernel vectors so (a phi_i, D0 a phi_j) = delta_ij.

    Returns the rotated phis with the resonance direction first:
    L(phi_1) real positive and L(phi_j) = 0 for j >= 2.
    """
    a, w = grid.a_vals, grid.weights
    d0a = np.stack([kern @ (w * a * raw_phis[:, j])
                    for j in range(raw_phis.shape[1])], axis=1)
    gram = np.einsum("m,mi,mj->ij", w,
                     np.conj(a[:, None] * raw_phis), d0a)
    gram = 0.5 * (gram + gram.conj().T)
    evals, evecs = np.linalg.eigh(gram)
    if np.any(evals <= 0):
        raise DomainError("dual Gram matrix is not positive definite")
    phis = raw_phis @ (evecs / np.sqrt(evals))
    # rotate so the L functional concentrates on the first vector
    ell = np.array([np.sum(w * a * phis[:, j]) for j in range(phis.shape[1])])
    ell = ell / FOUR_PI
    scale = np.sqrt(np.sum(w * a**2)) * np.sqrt(
        max(np.max(np.sum(w[:, None] * np.abs(phis)**2, axis=0)), 1e-300))
    if np.linalg.norm(ell) < 1e-8 * scale:
        return phis, np.zeros(phis.shape[1])
    q = np.eye(phis.shape[1], dtype=complex)
    q[:, 0] = np.conj(ell) / np.linalg.norm(ell)
    q, _ = np.linalg.qr(q)
    # qr may flip the sign of the first column; undo to keep L(phi_1) > 0
    if np.real(np.vdot(q[:, 0], np.conj(ell))) < 0:
        q[:, 0] = -q[:, 0]
    phis = phis @ q
    ell_new = np.array([np.sum(w * a * phis[:, j])
                        for j in range(phis.shape[1])]) / FOUR_PI
    # fix the global phase of phi_1 so L(phi_1) is real positive
    phase = ell_new[0] / abs(ell_new[0])
    phis[:, 0] = phis[:, 0] / phase
    ell_new[0] = abs(ell_new[0])
    return phis, ell_new


def threshold_classify(potential: Potential, coupling: CouplingFamily,
                       resolutions, threshold: float = RESONANCE_THRESHOLD,
                       kernel_tol_factor: float = 2.0) -> ThresholdReport:
    """Classify the zero-energy behaviour of -Delta + V by refinement.

    Exceptional (threshold resonance and/or eigenvalue) means the
    smallest singular values of Q0 = 1 + b D0 a sink below the threshold
    and keep decreasing by at least the tolerance factor per refinement
    step; staying above it at every resolution is regular; anything in
    between is reported indeterminate rather than guessed.
    """
    resolutions = sorted(int(r) for r in resolutions)
    if len(resolutions) < 2:
        raise DomainError("need at least two resolutions for the trace")
    traces = []
    grids = []
    spectra = []
    for res in resolutions:
        grid = build_nystrom(potential, res)
        d0, _ = zero_energy_terms(grid)
        sv = _weighted_singulars(grid, d0.matrix.real)
        grids.append(grid)
        spectra.append(np.sort(sv))
        traces.append((res, float(sv.min())))
    mins = [t[1] for t in traces]
    grid = grids[-1]

    if all(m > threshold for m in mins):
        return ThresholdReport("regular", spectra[-1][:4], tuple(traces),
                               np.empty((grid.size, 0)), np.empty((grid.size, 0)),
                               np.empty(0), 0.0, grid)

    # count candidate kernel directions: small at the finest resolution
    # and shrinking fast enough at every refinement step
    n_kernel = 0
    while True:
        j = n_kernel
        if spectra[-1][j] >= threshold:
            break
        ratios = [spectra[i][j] / spectra[i + 1][j]
                  for i in range(len(spectra) - 1)]
        if all(r >= kernel_tol_factor for r in ratios):
            n_kernel += 1
        else:
            break
    if n_kernel == 0:
        return ThresholdReport(
            "indeterminate", spectra[-1][:4], tuple(traces),
            np.empty((grid.size, 0)), np.empty((grid.size, 0)),
            np.empty(0), 0.0, grid,
            notes="singular values below threshold but not refinement-stable")

    d0, _ = zero_energy_terms(grid)
    kern = _d0_kernel(grid)
    _, vecs = _weighted_singulars(grid, d0.matrix.real, vectors=True)
    raw_phis = vecs[:, -n_kernel:][:, ::-1]
    phis, ell = _dual_normalize(grid, kern, raw_phis)
    a, w = grid.a_vals, grid.weights
    psis = a[:, None] * np.stack(
        [kern @ (w * a * phis[:, j]) for j in range(n_kernel)], axis=1)
    resonant = abs(ell[0]) > 0
    if resonant and n_kernel == 1:
        label = "case-a"
    elif not resonant:
        label = "case-b"
    else:
        label = "case-c"
    alpha = 0.0
    if resonant:
        a_phi1 = FOUR_PI * ell[0]
        alpha = float(-coupling.slopes[0] / abs(a_phi1) ** 2)
    return ThresholdReport(label, spectra[-1][:max(4, n_kernel)],
                           tuple(traces), phis, psis, ell, alpha, grid)


def riesz_projection(report: ThresholdReport, f):
    """S f = sum_j <f, psi_j> phi_j over the numerical kernel."""
    if report.kernel_dimension == 0:
        return np.zeros_like(np.asarray(f, dtype=complex))
    w = report.grid.weights
    coeffs = (w[:, None] * np.conj(report.psis)).T @ np.asarray(f)
    return report.phis @ coeffs


def resonance_profile(grid: NystromGrid, phi, ray_radii, direction=(1, 0, 0)):
    """u(r) = (D0 a phi)(r e) along a ray, with the companion r u(r).

    For a kernel vector phi the profile solves (-Delta + V)u = 0 and
    behaves like L(phi)/r at infinity.
    """
    ray_radii = np.atleast_1d(np.asarray(ray_radii, dtype=float))
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    pts = ray_radii[:, None] * e[None, :]
    diff = pts[:, None, :] - grid.nodes[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    if np.min(r) < 1e-12:
        raise DomainError("ray point coincides with a quadrature node")
    u = (1.0 / (FOUR_PI * r)) @ (grid.weights * grid.a_vals * np.asarray(phi))
    return u, ray_radii * u


def profile_at_points(grid: NystromGrid, phi, points):
    """(D0 a phi)(x) at arbitrary points off the quadrature nodes."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    diff = points[:, None, :] - grid.nodes[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    if np.min(r) < 1e-12:
        raise DomainError("evaluation point coincides with a quadrature node")
    return (1.0 / (FOUR_PI * r)) @ (grid.weights * grid.a_vals * np.asarray(phi))


def critical_well(radius: float, resolution: int) -> Potential:
    """Attractive well tuned so the discrete Q0 is exactly singular.

    The depth is 1 over the largest eigenvalue of the weighted D0 kernel
    on the resolution's own grid, the discrete analogue of the continuum
    critical depth (pi / (2 radius))^2.
    """
    probe = potential_from_label(f"well(1.0,{radius})")
    grid = build_nystrom(probe, resolution)
    kern = _d0_kernel(grid)
    sw = np.sqrt(grid.weights)
    sym = sw[:, None] * kern * sw[None, :]
    mu = float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[-1])
    return potential_from_label(f"well({1.0 / mu},{radius})")
