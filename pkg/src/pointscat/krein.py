"""Resolvent of the point-interaction Hamiltonian.

The resolvent at energy z^2 (Im z > 0) is the free resolvent plus a
rank-N correction: kernel columns Gg_z(. - y_j) weighted by the inverse
interaction matrix and paired bilinearly with the input,

    R(z)u = G0(z)u + sum_{j,l} (Gamma(z)^{-1})_{jl} Gg_z(. - y_j)
            * int Gg_z(y - y_l) u(y) dy.

Packet inputs use the analytic annulus reductions of the green module;
grid samples fall back to Nystrom quadrature.
"""

from __future__ import annotations

import numpy as np

from .gamma import PointConfig, build_gamma
from .green import (DomainError, WavePacket, free_resolvent_packet,
                    green_matrix, kernel_eval, resolvent_pairing)


class NearSingularGammaError(np.linalg.LinAlgError):
    """z^2 is within tolerance of a bound-state energy."""

    def __init__(self, z, cond):
        self.z = z
        self.cond = cond
        super().__init__(
            f"interaction matrix nearly singular at z={z} (cond={cond:.2e})")


def _gamma_inverse(config: PointConfig, z: complex, cond_max: float = 1e10):
    gm = build_gamma(config, z)
    sv = np.linalg.svd(gm.entries, compute_uv=False)
    # the absolute scale abs(z)/(4 pi) catches the N = 1 case where a
    # singular matrix still has condition number 1
    scale = max(sv[0], abs(z) / (4.0 * np.pi))
    cond = float(scale / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > cond_max:
        raise NearSingularGammaError(z, cond)
    return gm.inverse()


def _center_pairings(config: PointConfig, z: complex, u, nodes, weights):
    """c_l = int Gg_z(y - y_l) u(y) dy for each center (bilinear)."""
    centers = config.center_array()
    if isinstance(u, WavePacket):
        return np.atleast_1d(resolvent_pairing(u, z, extra_shifts=centers))
    samples = np.asarray(u)
    if nodes is None or weights is None:
        raise DomainError("grid samples require nodes and weights")
    kmat = green_matrix(z, np.asarray(nodes), np.asarray(weights),
                        nodes_out=centers)
    return kmat @ (np.asarray(weights) * samples)


def apply_point_resolvent(config: PointConfig, z: complex, u, eval_points,
                          nodes=None, weights=None):
    """R(z)u at eval_points for Im z > 0, z off the bound-state set.

    u is either a WavePacket or a vector of samples on the Nystrom grid
    (nodes, weights).  eval_points must avoid the interaction centers.
    """
    if np.imag(z) <= 0:
        raise DomainError("point resolvent requires Im z > 0")
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    centers = config.center_array()
    dists = np.linalg.norm(eval_points[:, None] - centers[None, :], axis=-1)
    if np.min(dists) < 1e-12:
        raise DomainError("evaluation points must avoid the centers")
    ginv = _gamma_inverse(config, z)
    pair = _center_pairings(config, z, u, nodes, weights)
    if isinstance(u, WavePacket):
        free = free_resolvent_packet(u, z, eval_points)
    else:
        kmat = green_matrix(z, np.asarray(nodes), np.asarray(weights),
                            nodes_out=eval_points)
        free = kmat @ (np.asarray(weights) * np.asarray(u))
    # columns Gg_z(x - y_j), one per center
    cols = np.empty((eval_points.shape[0], config.n), dtype=complex)
    for j in range(config.n):
        cols[:, j] = kernel_eval(z, eval_points - centers[j])
    return free + cols @ (ginv @ pair)


def first_resolvent_residual(config: PointConfig, z1: complex, z2: complex,
                             samples, nodes, weights) -> float:
    """Grid norm of R(z1)u - R(z2)u - (z1^2 - z2^2) R(z1) R(z2) u.

    Evaluates everything on the Nystrom grid itself; the residual is the
    weighted l2 norm, certifying the implementation (small up to the
    combined quadrature error).
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    samples = np.asarray(samples)
    r1u = apply_point_resolvent(config, z1, samples, nodes, nodes, weights)
    if z1 == z2:
        return 0.0
    r2u = apply_point_resolvent(config, z2, samples, nodes, nodes, weights)
    r12u = apply_point_resolvent(config, z1, r2u, nodes, nodes, weights)
    resid = r1u - r2u - (z1**2 - z2**2) * r12u
    return float(np.sqrt(np.sum(weights * np.abs(resid) ** 2)))
