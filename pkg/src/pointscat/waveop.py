"""Stationary wave operators for the point-interaction model.

The plus wave operator acts as identity plus a rank-N-per-frequency
correction: with d_l(k) the on-shell Green pairing of the translated
input and c(k) = Gamma(-k)^{-1} d(k),

    (W+ u)(x) = u(x) + (1/pi i) sum_j int_0^inf k c_j(k) Gg_{-k}(x - y_j) dk.

The k-integrand is smooth and supported on the packet's Fourier interval,
so every operation here is a one dimensional quadrature.  The minus wave
operator is conjugation-intertwined with the plus one: W- = C W+ C.

Inner products of wave-operator images (the isometry check) are computed
on the Fourier side, where the correction is an explicit multiplier plus
principal-value Hilbert-type integrals of c_j.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad_vec

from .gamma import PointConfig, build_gamma, scan_real_axis
from .green import (FOUR_PI, FT_NORM, BumpProfile, DomainError, WavePacket,
                    _sinc, delta_pairing, gauss_segment, green_pairing,
                    kernel_eval, packet_inner, sphere_rule)

# prefactor 1/(pi i) of the stationary k-integral
_PREF = 1.0 / (np.pi * 1j)


def _check_nonsingular(config: PointConfig, lo: float, hi: float,
                       floor: float = 1e-10):
    s = scan_real_axis(config, lo, hi, nodes=64)
    if s < floor:
        raise DomainError(
            f"interaction matrix nearly singular on the packet support "
            f"(min singular value {s:.2e})")


def _amplitudes(config: PointConfig, packet: WavePacket, k):
    """c(k) = Gamma(-k)^{-1} d(k) columns for each k in the 1-d array k."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    centers = config.center_array()
    lo, hi = packet.k_support
    out = np.zeros((k.size, config.n), dtype=complex)
    for i, kk in enumerate(k):
        if not lo < kk < hi:
            continue
        d = np.atleast_1d(delta_pairing(packet, kk, extra_shifts=centers))
        out[i] = np.linalg.solve(build_gamma(config, -kk).entries, d)
    return out


def wave_pairing_point(config: PointConfig, u: WavePacket, v: WavePacket,
                       epsrel: float = 1e-8) -> complex:
    """<W+ u, v> via the stationary representation (conjugate-linear in v)."""
    lo, hi = u.k_support
    _check_nonsingular(config, lo, hi)
    centers = config.center_array()

    def integrand(k):
        c = _amplitudes(config, u, k)[0]
        p_plus = np.atleast_1d(green_pairing(v, k, +1, extra_shifts=centers))
        return k * np.sum(c * np.conj(p_plus))

    corr, _ = quad_vec(integrand, lo, hi, epsrel=epsrel)
    return packet_inner(u, v) + _PREF * corr


def apply_wave_operator_point(config: PointConfig, u: WavePacket, eval_points,
                              epsrel: float = 1e-8):
    """(W+ u)(x) at eval_points (disjoint from the interaction centers)."""
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    centers = config.center_array()
    dists = np.linalg.norm(eval_points[:, None] - centers[None, :], axis=-1)
    if np.min(dists) < 1e-12:
        raise DomainError("evaluation points must avoid the centers")
    lo, hi = u.k_support
    _check_nonsingular(config, lo, hi)

    def integrand(k):
        c = _amplitudes(config, u, k)[0]
        cols = np.exp(-1j * k * dists) / (FOUR_PI * dists)
        return k * (cols @ c)

    corr, _ = quad_vec(integrand, lo, hi, epsrel=epsrel)
    return u(eval_points) + _PREF * corr


def minus_from_plus(plus_operation):
    """W- version of a W+ operation: conjugate in, apply, conjugate out.

    Packet arguments are conjugated through WavePacket.conjugate();
    the complex result is conjugated on the way back.
    """

    def minus_operation(config, *args, **kwargs):
        flipped = tuple(a.conjugate() if isinstance(a, WavePacket) else a
                        for a in args)
        return np.conj(plus_operation(config, *flipped, **kwargs))

    minus_operation.__name__ = plus_operation.__name__ + "_minus"
    return minus_operation


wave_pairing_point_minus = minus_from_plus(wave_pairing_point)
apply_wave_operator_minus = minus_from_plus(apply_wave_operator_point)


def _pv_kintegral(fk, fk_at_rho, knodes, kweights, rho, a, b):
    """PV int_a^b f(k) / (rho^2 - k^2) dk, vectorized over rho.

    fk: (nk, m) samples on the Gauss rule (knodes, kweights) for [a, b];
    fk_at_rho: (nrho, m) the same function at the rho values (smooth
    extension).  Smooth subtraction plus the analytic principal value of
    the remaining 1/(rho^2 - k^2) factor.
    """
    rho = np.asarray(rho, dtype=float)
    denom = rho[:, None] ** 2 - knodes[None, :] ** 2
    # no Gauss node coincides with any rho in exact arithmetic; guard anyway
    denom = np.where(denom == 0.0, 1e-300, denom)
    smooth = (fk[None, :, :] - fk_at_rho[:, None, :]) / denom[:, :, None]
    base = np.einsum("k,rkm->rm", kweights, smooth)
    with np.errstate(divide="ignore"):
        pv_log = (np.log(np.abs((rho + b) / (rho - b)))
                  - np.log(np.abs((rho + a) / (rho - a)))) / (2.0 * rho)
    return base + fk_at_rho * pv_log[:, None]


class _FourierField:
    """Fourier-side data of W+ u for one packet: coefficients b_j(rho).

    b_j(rho) = (1/(pi i (2 pi)^{3/2})) [PV int k c_j(k)/(rho^2-k^2) dk
               - (i pi / 2) c_j(rho)],
    so that (W+ u)^(xi) = uhat(xi) + sum_j e^{-i xi.y_j} b_j(|xi|).
    """

    def __init__(self, config: PointConfig, packet: WavePacket,
                 nquad: int = 160):
        self.config = config
        self.packet = packet
        self.lo, self.hi = packet.k_support
        self.knodes, self.kweights = gauss_segment(self.lo, self.hi, nquad)
        self.c_on_grid = _amplitudes(config, packet, self.knodes)
        self.kc = self.knodes[:, None] * self.c_on_grid
        # first moment, for the 1/rho^2 far tail of b_j
        self.moment = self.kweights @ self.kc

    def coefficients(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        kc_at_rho = rho[:, None] * _amplitudes(self.config, self.packet, rho)
        pv = _pv_kintegral(self.kc, kc_at_rho, self.knodes, self.kweights,
                           rho, self.lo, self.hi)
        return (_PREF / FT_NORM) * (pv - 0.5j * np.pi * kc_at_rho / rho[:, None])

    def tail_coefficient(self):
        # b_j(rho) ~ -(pref) moment_j / rho^2 as rho -> infinity
        return -(_PREF / FT_NORM) * self.moment


def _surface_cross(u: WavePacket, v: WavePacket, rho, nsphere: int = 24):
    """int_{|xi|=rho} uhat conj(vhat) dS, vectorized over rho."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.linalg.norm(u.momentum) == 0 and np.linalg.norm(v.momentum) == 0:
        s = np.linalg.norm(np.asarray(u.shift) - np.asarray(v.shift))
        return (FOUR_PI * rho**2 * u.profile(rho) * v.profile(rho)
                * _sinc(rho * s)).astype(complex)
    dirs, wts = sphere_rule(nsphere)
    out = np.empty(rho.size, dtype=complex)
    for i, rr in enumerate(rho):
        xi = rr * dirs
        out[i] = rr**2 * np.sum(wts * u.uhat(xi) * np.conj(v.uhat(xi)))
    return out


def wave_image_inner(config: PointConfig, u: WavePacket, v: WavePacket,
                     nquad: int = 160, tail_cut: float = 400.0) -> complex:
    """<W+ u, W+ v> by radial integration of the Fourier-side fields."""
    lo = min(u.k_support[0], v.k_support[0])
    hi = max(u.k_support[1], v.k_support[1])
    _check_nonsingular(config, lo, hi)
    fu = _FourierField(config, u, nquad)
    fv = _FourierField(config, v, nquad)
    centers = config.center_array()
    dmat = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)

    def cross_block(rho):
        """Integrand S(rho) = surface integral of (W+u)^ conj((W+v)^)."""
        bu = fu.coefficients(rho)                       # (nrho, N)
        bv = fv.coefficients(rho)
        au = u.surface_integral(rho, extra_shifts=centers)
        av = v.surface_integral(rho, extra_shifts=centers)
        au = au.reshape(len(rho), -1)
        av = av.reshape(len(rho), -1)
        s = _surface_cross(u, v, rho)
        s = s + np.sum(np.conj(bv) * au + bu * np.conj(av), axis=-1)
        sinc_fac = FOUR_PI * rho[:, None, None] ** 2 * _sinc(
            rho[:, None, None] * dmat[None, :, :])
        s = s + np.einsum("rj,rjl,rl->r", bu, sinc_fac, np.conj(bv))
        return s

    total = 0.0 + 0.0j
    # support interval: all terms present, PV structure inside
    for seg_a, seg_b in zip(np.linspace(lo, hi, 9)[:-1],
                            np.linspace(lo, hi, 9)[1:]):
        rho, w = gauss_segment(seg_a, seg_b, 24)
        total += w @ cross_block(rho)
    # below the support: only the correction-correction term survives
    rho, w = gauss_segment(1e-8, lo, 48)
    total += w @ cross_block(rho)
    # far side: log-spaced composite segments up to the cutoff
    edges = np.geomspace(hi, tail_cut, 16)
    for seg_a, seg_b in zip(edges[:-1], edges[1:]):
        rho, w = gauss_segment(seg_a, seg_b, 16)
        total += w @ cross_block(rho)
    # analytic remainder of the diagonal 1/rho^2 far tail
    total += FOUR_PI * np.sum(fu.tail_coefficient()
                              * np.conj(fv.tail_coefficient())) / tail_cut
    return complex(total)


def orthonormal_family(count: int, lo: float, hi: float,
                       nquad: int = 96):
    """Radial packets on disjoint annuli partitioning [lo, hi], unit norm.

    Disjoint Fourier supports make the family exactly orthogonal; each
    member is scaled to unit L^2 norm.
    """
    if count < 1 or not 0 < lo < hi:
        raise DomainError("need count >= 1 and 0 < lo < hi")
    edges = np.linspace(lo, hi, count + 1)
    family = []
    for a, b in zip(edges[:-1], edges[1:]):
        raw = WavePacket(BumpProfile(a, b), nquad=nquad)
        family.append(WavePacket(BumpProfile(a, b, 1.0 / raw.norm()),
                                 nquad=nquad))
    return family


def isometry_defect(config: PointConfig, coefficients, family=None,
                    nquad: int = 160, tail_cut: float = 400.0) -> float:
    """Relative defect | ||W+ u||^2 - ||u||^2 | / ||u||^2 for u = sum c_i e_i.

    The norm of the image is assembled from the Gram matrix of the
    wave-operator images of the orthonormal family.
    """
    coefficients = np.asarray(coefficients, dtype=complex)
    if family is None:
        family = orthonormal_family(len(coefficients), 1.0, 2.0)
    if len(family) != len(coefficients):
        raise DomainError("one coefficient per family member")
    n = len(family)
    gram = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            gram[i, j] = wave_image_inner(config, family[i], family[j],
                                          nquad, tail_cut)
            if j > i:
                gram[j, i] = np.conj(gram[i, j])
    norm_in = float(np.sum(np.abs(coefficients) ** 2))
    norm_out = float(np.real(coefficients.conj() @ gram @ coefficients))
    return abs(norm_out - norm_in) / norm_in
