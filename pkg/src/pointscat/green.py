"""Free-space Green kernel, Fourier-annulus wave packets, and Green pairings.

The kernel e^{iz|x|}/(4 pi |x|) is the convolution kernel of the free
resolvent at energy z^2.  Wave packets are L^2 functions whose Fourier
transform is a smooth bump supported in a spherical annulus bounded away
from 0 and infinity; all Green pairings of such packets reduce to one
dimensional quadratures over the annulus radius, which is what makes the
stationary wave-operator integrals cheap and accurate.

Conventions
-----------
Fourier transform is unitary: Fu(xi) = (2 pi)^{-3/2} int e^{-i xi.x} u(x) dx.
Green pairings int G(y) u(y) dy are bilinear (no conjugation); inner
products <u, v> are conjugate-linear in v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

FOUR_PI = 4.0 * np.pi
FT_NORM = (2.0 * np.pi) ** 1.5  # (2 pi)^{3/2}


class SingularPointError(ValueError):
    """Kernel evaluated at the singular point x = 0."""


class DomainError(ValueError):
    """Argument outside the operation's domain."""


def kernel_eval(z: complex, x) -> complex:
    """Green kernel e^{iz|x|} / (4 pi |x|) at the 3-vector x (x != 0)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(r == 0.0):
        raise SingularPointError("Green kernel is singular at x = 0")
    return np.exp(1j * z * r) / (FOUR_PI * r)


def _cell_radius(weight):
    # radius of the ball with the same volume as the quadrature cell
    return (3.0 * np.asarray(weight) / FOUR_PI) ** (1.0 / 3.0)


def singular_diagonal(z: complex, weight):
    """Diagonal kernel value for the self-interaction node.

    The 1/(4 pi r) part is replaced by its analytic average over the
    equal-volume ball of the node's cell; the smooth remainder
    (e^{izr} - 1)/(4 pi r) contributes its r -> 0 value iz/(4 pi).
    """
    rc = _cell_radius(weight)
    return 3.0 / (8.0 * np.pi * rc) + 1j * z / FOUR_PI


def green_matrix(z: complex, nodes, weights, nodes_out=None):
    """Kernel matrix K[m, n] = Gg_z(x_m - x_n) with the singular diagonal rule.

    If nodes_out is given, evaluates Gg_z(x_out_m - x_n) instead and applies
    the diagonal rule only where an output point coincides with a node.
    """
    nodes = np.asarray(nodes, dtype=float)
    src = nodes
    out = nodes if nodes_out is None else np.asarray(nodes_out, dtype=float)
    diff = out[:, None, :] - src[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    coincident = r == 0.0
    r_safe = np.where(coincident, 1.0, r)
    kmat = np.exp(1j * z * r_safe) / (FOUR_PI * r_safe)
    if np.any(coincident):
        diag_vals = singular_diagonal(z, np.asarray(weights))
        mrow, ncol = np.nonzero(coincident)
        kmat[mrow, ncol] = diag_vals[ncol]
    if np.isrealobj(np.asarray(z)) and np.imag(z) == 0 and np.real(z) == 0:
        kmat = kmat.real.astype(complex)
    return kmat


def apply_free_resolvent(z: complex, samples, nodes, weights):
    """Nystrom application of the free resolvent (H0 - z^2)^{-1} on a grid."""
    samples = np.asarray(samples)
    weights = np.asarray(weights, dtype=float)
    if samples.shape[0] != len(weights):
        raise DomainError("sample vector does not match the grid")
    kmat = green_matrix(z, nodes, weights)
    return kmat @ (weights * samples)


def gauss_segment(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def sphere_rule(n: int):
    """Product quadrature on the unit sphere: (points (m,3), weights summing 4 pi)."""
    ct, wt = leggauss(n)
    st = np.sqrt(1.0 - ct**2)
    phi = 2.0 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
    wphi = 2.0 * np.pi / (2 * n)
    pts = np.empty((n * 2 * n, 3))
    pts[:, 0] = np.outer(st, np.cos(phi)).ravel()
    pts[:, 1] = np.outer(st, np.sin(phi)).ravel()
    pts[:, 2] = np.outer(ct, np.ones(2 * n)).ravel()
    wts = np.outer(wt * wphi, np.ones(2 * n)).ravel()
    return pts, wts


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True)
class BumpProfile:
    """Smooth C^infty bump on [r1, r2], vanishing to all orders at the edges."""

    r1: float
    r2: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r1 < self.r2:
            raise DomainError("bump profile requires 0 < r1 < r2")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        t = (2.0 * rho - self.r1 - self.r2) / (self.r2 - self.r1)
        inside = np.abs(t) < 1.0
        t_safe = np.where(inside, t, 0.0)
        vals = np.exp(1.0 - 1.0 / (1.0 - t_safe**2))
        return self.amplitude * np.where(inside, vals, 0.0)


@dataclass(frozen=True)
class WavePacket:
    """L^2 packet with Fourier transform g(|xi - p|) e^{-i(xi - p).c}.

    Real space: u(x) = e^{ip.x} u0(|x - c|) with u0 the radial inverse
    sine transform of g.  The packet is radial-annulus when p = 0 and
    modulated otherwise; |p| < r1 is required so the Fourier support stays
    bounded away from the origin.
    """

    profile: BumpProfile
    shift: tuple = (0.0, 0.0, 0.0)
    momentum: tuple = (0.0, 0.0, 0.0)
    nquad: int = 96

    def __post_init__(self):
        if self.nquad < 8:
            raise DomainError("quadrature resolution too small")
        if np.linalg.norm(self.momentum) >= self.profile.r1:
            raise DomainError("modulation momentum must satisfy |p| < r1")

    @property
    def kind(self) -> str:
        return "modulated" if np.linalg.norm(self.momentum) > 0 else "radial-annulus"

    @property
    def k_support(self):
        """Interval [R^{-1}, R] bracketing the |xi| support of the transform."""
        p = np.linalg.norm(self.momentum)
        return (self.profile.r1 - p, self.profile.r2 + p)

    def _rho_rule(self):
        return gauss_segment(self.profile.r1, self.profile.r2, self.nquad)

    def uhat(self, xi):
        """Fourier transform at points xi of shape (..., 3)."""
        xi = np.asarray(xi, dtype=float)
        eta = xi - np.asarray(self.momentum)
        phase = np.exp(-1j * eta @ np.asarray(self.shift))
        return self.profile(np.linalg.norm(eta, axis=-1)) * phase

    def _radial_eval(self, r):
        # u0(r) = (2 pi)^{-3/2} (4 pi / r) int g(rho) rho sin(rho r) drho
        rho, w = self._rho_rule()
        g = self.profile(rho)
        r = np.asarray(r, dtype=float)
        small = r < 1e-12
        r_safe = np.where(small, 1.0, r)
        kern = np.sin(np.outer(r_safe, rho)) / r_safe[:, None]
        kern[small] = rho[None, :]
        return (FOUR_PI / FT_NORM) * kern @ (w * g * rho)

    def __call__(self, x):
        """Real-space evaluation at points x of shape (..., 3)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x - np.asarray(self.shift), axis=-1)
        vals = self._radial_eval(r.ravel()).reshape(r.shape).astype(complex)
        p = np.asarray(self.momentum)
        if np.linalg.norm(p) > 0:
            vals = vals * np.exp(1j * x @ p)
        return vals

    def conjugate(self) -> "WavePacket":
        """Packet representing the complex conjugate of u (profile is real)."""
        return WavePacket(self.profile, self.shift,
                          tuple(-np.asarray(self.momentum)), self.nquad)

    def norm(self) -> float:
        rho, w = self._rho_rule()
        g = self.profile(rho)
        return float(np.sqrt(FOUR_PI * np.sum(w * rho**2 * g**2)))

    def surface_integral(self, rho, extra_shifts=None, nsphere: int = 24):
        """A(rho) = surface integral of e^{i xi.y} uhat(xi) over |xi| = rho.

        extra_shifts: translation vectors y, one row each (default: none).
        Returns an array of shape (len(rho), nshift) (or (len(rho),) when
        extra_shifts is None).  Radial packets use the closed sinc form.
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        single = extra_shifts is None
        shifts = (np.zeros((1, 3)) if single
                  else np.atleast_2d(np.asarray(extra_shifts, dtype=float)))
        if np.linalg.norm(self.momentum) == 0:
            s = np.linalg.norm(shifts - np.asarray(self.shift), axis=-1)
            g = self.profile(rho)
            out = (FOUR_PI * rho**2 * g)[:, None] * _sinc(np.outer(rho, s))
            out = out.astype(complex)
        else:
            dirs, wts = sphere_rule(nsphere)
            out = np.empty((rho.size, shifts.shape[0]), dtype=complex)
            for i, rr in enumerate(rho):
                xi = rr * dirs
                vals = self.uhat(xi)
                phases = np.exp(1j * xi @ shifts.T)
                out[i] = rr**2 * (wts * vals) @ phases
        return out[:, 0] if single else out


def _pv_log(k: float, a: float, b: float) -> float:
    # PV int_a^b drho / (rho^2 - k^2)
    def anti(x):
        return np.log(np.abs((x - k) / (x + k))) / (2.0 * k)

    return anti(b) - anti(a)


def delta_pairing(packet: WavePacket, k: float, extra_shifts=None):
    """d(k) = int (Gg_k - Gg_{-k})(y) u(y) dy, the on-shell Green pairing.

    Equals i pi (2 pi)^{-3/2} A(k) / k with A the spherical surface
    integral of the (translated) Fourier transform.
    """
    if k <= 0:
        raise DomainError("on-shell pairing requires k > 0")
    a_k = packet.surface_integral(np.array([k]), extra_shifts)[0]
    return (1j * np.pi / (FT_NORM * k)) * a_k


def green_pairing(packet: WavePacket, k: float, sign: int, extra_shifts=None):
    """p^{+-}(k) = int Gg_{+-k}(y) u(y) dy for real k > 0 (boundary values).

    The principal value over the annulus is evaluated with smooth
    subtraction; the half-residue term carries the sign of +-i0.
    """
    if k <= 0:
        raise DomainError("boundary-value pairing requires k > 0")
    lo, hi = packet.k_support
    rho, w = gauss_segment(lo, hi, max(packet.nquad, 64))
    a_vals = packet.surface_integral(rho, extra_shifts)
    denom = rho**2 - k**2
    if not lo < k < hi:
        # off the support annulus: no singularity, no half residue
        ordinary = a_vals / (denom if a_vals.ndim == 1 else denom[:, None])
        pv = np.sum(w * ordinary) if a_vals.ndim == 1 else w @ ordinary
        return pv / FT_NORM
    a_at_k = packet.surface_integral(np.array([k]), extra_shifts)[0]
    smooth = (a_vals - a_at_k) / (denom if a_vals.ndim == 1 else denom[:, None])
    if a_vals.ndim == 1:
        pv = np.sum(w * smooth)
    else:
        pv = w @ smooth
    pv = pv + a_at_k * _pv_log(k, lo, hi)
    return (pv + sign * 1j * np.pi * a_at_k / (2.0 * k)) / FT_NORM


def resolvent_pairing(packet: WavePacket, z: complex, extra_shifts=None):
    """int Gg_z(y) u(y) dy for Im z > 0.

    When Re z falls inside the annulus the integrand is nearly singular
    for small Im z; a two-term Taylor subtraction at Re z with the
    analytic complex-log antiderivatives keeps the quadrature accurate
    uniformly down to the real-axis boundary values.
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("off-axis pairing requires Im z > 0")
    lo, hi = packet.k_support
    rho, w = gauss_segment(lo, hi, max(packet.nquad, 64))
    a_vals = np.atleast_2d(packet.surface_integral(rho, extra_shifts).T).T
    denom = (rho**2 - z**2)[:, None]
    k0 = z.real
    if lo < k0 < hi:
        h = 1e-5 * (hi - lo)
        samples = packet.surface_integral(
            np.array([k0 - h, k0, k0 + h]), extra_shifts)
        samples = np.atleast_2d(samples.T).T
        a0 = samples[1]
        a1 = (samples[2] - samples[0]) / (2.0 * h)
        taylor = a0[None, :] + a1[None, :] * (rho - k0)[:, None]
        total = w @ ((a_vals - taylor) / denom)
        # int 1/(rho^2 - z^2) and int rho/(rho^2 - z^2); each log factor
        # has constant-sign imaginary part, so principal branches glue
        log_m = np.log(np.array([hi, lo]) - z)
        log_p = np.log(np.array([hi, lo]) + z)
        i0 = ((log_m[0] - log_p[0]) - (log_m[1] - log_p[1])) / (2.0 * z)
        i1 = ((log_m[0] + log_p[0]) - (log_m[1] + log_p[1])) / 2.0
        total = total + a0 * i0 + a1 * (i1 - k0 * i0)
    else:
        total = w @ (a_vals / denom)
    total = total / FT_NORM
    return total[0] if (extra_shifts is None) else total


def packet_pairings(packet: WavePacket, k: float):
    """(p^+, p^-, d) for a single packet at real k > 0; d = p^+ - p^-."""
    if k <= 0:
        raise DomainError("packet pairings require k > 0")
    p_plus = green_pairing(packet, k, +1)
    p_minus = green_pairing(packet, k, -1)
    return p_plus, p_minus, delta_pairing(packet, k)


def packet_inner(u: WavePacket, v: WavePacket, nsphere: int = 24) -> complex:
    """<u, v> = int uhat conj(vhat) d xi (conjugate-linear in v)."""
    lo = min(u.k_support[0], v.k_support[0])
    hi = max(u.k_support[1], v.k_support[1])
    n = max(u.nquad, v.nquad)
    rho, w = gauss_segment(lo, hi, n)
    radial = (np.linalg.norm(u.momentum) == 0 and np.linalg.norm(v.momentum) == 0)
    if radial:
        gu = u.profile(rho)
        gv = v.profile(rho)
        s = np.linalg.norm(np.asarray(u.shift) - np.asarray(v.shift))
        return complex(FOUR_PI * np.sum(w * rho**2 * gu * gv * _sinc(rho * s)))
    dirs, wts = sphere_rule(nsphere)
    total = 0.0 + 0.0j
    for rr, ww in zip(rho, w):
        xi = rr * dirs
        total += ww * rr**2 * np.sum(wts * u.uhat(xi) * np.conj(v.uhat(xi)))
    return complex(total)


def free_resolvent_packet(packet: WavePacket, z: complex, points):
    """(G0(z) u)(x) for Im z > 0 at arbitrary points, via the annulus transform."""
    if np.imag(z) <= 0:
        raise DomainError("pointwise free resolvent requires Im z > 0")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rho, w = gauss_segment(packet.profile.r1, packet.profile.r2,
                           max(packet.nquad, 64))
    g = packet.profile(rho)
    if np.linalg.norm(packet.momentum) == 0:
        r = np.linalg.norm(points - np.asarray(packet.shift), axis=-1)
        small = r < 1e-12
        r_safe = np.where(small, 1.0, r)
        kern = np.sin(np.outer(r_safe, rho)) / r_safe[:, None]
        kern[small] = rho[None, :]
        return (FOUR_PI / FT_NORM) * kern @ (w * g * rho / (rho**2 - z**2))
    # modulated: quadrature over the annulus around the carrier momentum
    dirs, wts = sphere_rule(32)
    p = np.asarray(packet.momentum)
    c = np.asarray(packet.shift)
    out = np.zeros(points.shape[0], dtype=complex)
    for rr, ww in zip(rho, w):
        eta = rr * dirs
        xi = eta + p
        denom = np.sum(xi**2, axis=-1) - z**2
        amp = packet.profile(rr) * np.exp(-1j * eta @ c) / denom
        out += ww * rr**2 * (np.exp(1j * points @ xi.T) @ (wts * amp))
    return out / FT_NORM


def eval_via_fourier(packet: WavePacket, points, nsphere: int = 32):
    """Independent real-space evaluation by 3D quadrature of the transform."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rho, w = gauss_segment(packet.profile.r1, packet.profile.r2,
                           max(packet.nquad, 64))
    dirs, wts = sphere_rule(nsphere)
    p = np.asarray(packet.momentum)
    c = np.asarray(packet.shift)
    out = np.zeros(points.shape[0], dtype=complex)
    for rr, ww in zip(rho, w):
        eta = rr * dirs
        xi = eta + p
        amp = packet.profile(rr) * np.exp(-1j * eta @ c)
        out += ww * rr**2 * (np.exp(1j * points @ xi.T) @ (wts * amp))
    return out / FT_NORM
