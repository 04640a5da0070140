"""Scaled multi-center systems of regular potentials and their limits.

For potentials V_j(x) centered at y_j and shrunk by epsilon, everything
is driven by the block operator M_eps on the N-fold product of the
support grids.  Its diagonal part D is the single-center Birman-Schwinger
matrix at wavenumber eps*k; the off-diagonal part eps*E couples centers
through the Green kernel evaluated at eps(x - y) + y_i - y_j.  The
factored inverse

    eps (1 + M_eps)^{-1}
        = eps (1 + eps (1 + D)^{-1} E)^{-1} (1 + D)^{-1}

converges, when every center carries a threshold resonance, to a finite
rank operator whose a/b sandwich is minus the inverse of the
point-interaction matrix with strengths taken from the threshold
reports.  The scaled wave-operator pairing and resolvent are evaluated
through exact change-of-variable identities: each eps^{1/2}-weighted
outer factor reduces to a Green pairing of the packet at the shifted
points eps x + y_j, so no operator on the unbounded domain is ever
materialized.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor
from scipy.linalg.lapack import zgecon

from .birman import (CouplingFamily, DiscreteOperator, NystromGrid, Potential,
                     ThresholdReport, bs_matrix, threshold_classify)
from .gamma import PointConfig, build_gamma
from .green import (FOUR_PI, DomainError, WavePacket, delta_pairing,
                    free_resolvent_packet, gauss_segment, green_pairing,
                    kernel_eval, packet_inner, resolvent_pairing)
from .krein import apply_point_resolvent
from .opalg import SingularFactorError, deift_reduce
from .waveop import _PREF, _check_nonsingular, wave_pairing_point


@dataclass(frozen=True)
class ScaledSystem:
    """Centers, per-center potentials/couplings/grids, threshold data.

    The strengths in ``config`` are the limit alphas from the threshold
    reports (zero at regular centers, where no point interaction
    survives the limit).
    """

    config: PointConfig
    potentials: tuple
    coupling: CouplingFamily
    grids: tuple
    reports: tuple

    def __post_init__(self):
        n = self.config.n
        if not (len(self.potentials) == len(self.grids)
                == len(self.reports) == self.coupling.n == n):
            raise DomainError("need one potential/coupling/grid/report "
                              "per center")

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def block_sizes(self):
        return tuple(g.size for g in self.grids)

    @property
    def resonant(self):
        """Mask of centers whose potential carries a threshold resonance."""
        return np.array([r.classification in ("case-a", "case-c")
                         for r in self.reports])

    def limit_config(self) -> PointConfig:
        """Point interactions surviving the limit: resonant centers only."""
        mask = self.resonant
        if not mask.any():
            raise DomainError("no resonant center: the limit model is free")
        centers = self.config.center_array()[mask]
        strengths = [r.alpha for r, m in zip(self.reports, mask) if m]
        return PointConfig(tuple(map(tuple, centers)), tuple(strengths))

    def max_node_radius(self) -> float:
        return max(float(np.linalg.norm(g.nodes, axis=-1).max())
                   for g in self.grids)


def build_scaled_system(centers, potentials, coupling: CouplingFamily,
                        resolutions=(6, 8)) -> ScaledSystem:
    """Classify each center's potential and collect the working grids.

    The finest-resolution grid of each threshold report is the grid on
    which all scaled operators are discretized, so the limit strengths
    and the scaled matrices share one quadrature.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(potentials) != len(centers) or coupling.n != len(centers):
        raise DomainError("need one potential and coupling slope per center")
    reports = tuple(
        threshold_classify(pot, coupling.single(j), resolutions)
        for j, pot in enumerate(potentials))
    strengths = tuple(r.alpha for r in reports)
    config = PointConfig(tuple(map(tuple, centers)), strengths)
    return ScaledSystem(config, tuple(potentials), coupling,
                        tuple(r.grid for r in reports), reports)


def gamma_hat(sys: ScaledSystem, k: complex) -> np.ndarray:
    """N x N coupling matrix: Green kernel between centers, zero diagonal."""
    y = sys.config.center_array()
    out = np.zeros((sys.n, sys.n), dtype=complex)
    for i in range(sys.n):
        for j in range(i + 1, sys.n):
            g = kernel_eval(k, y[i] - y[j])
            out[i, j] = g
            out[j, i] = g
    return out


def _offsets(sys: ScaledSystem):
    return np.concatenate([[0], np.cumsum(sys.block_sizes)])


def a_rows(sys: ScaledSystem) -> np.ndarray:
    """<A|: block-diagonal rows w_m a_j(x_m), mapping grid values to C^N."""
    off = _offsets(sys)
    out = np.zeros((sys.n, off[-1]))
    for j, g in enumerate(sys.grids):
        out[j, off[j]:off[j + 1]] = g.weights * g.a_vals
    return out


def b_cols(sys: ScaledSystem) -> np.ndarray:
    """|B>: block-diagonal columns b_j(x_m), mapping C^N to grid values."""
    off = _offsets(sys)
    out = np.zeros((off[-1], sys.n))
    for j, g in enumerate(sys.grids):
        out[off[j]:off[j + 1], j] = g.b_vals
    return out


def _check_separation(sys: ScaledSystem, eps: float):
    if eps <= 0:
        raise DomainError("eps must be positive")
    if sys.n > 1:
        if eps * sys.max_node_radius() >= sys.config.min_distance() / 4.0:
            raise DomainError(
                "scaled supports too close: eps * max node radius must stay "
                "below a quarter of the minimum center distance")


def assemble_m_eps(sys: ScaledSystem, eps: float, k: complex):
    """(M, D, E) with M = D + eps E exactly.

    D is block-diagonal with the single-center Birman-Schwinger matrices
    at wavenumber eps k; the off-diagonal E blocks carry the kernel
    lam_i b_i(x) e^{ik|eps(x-y)+y_i-y_j|} a_j(y) / (4 pi |...|).
    """
    _check_separation(sys, eps)
    lam = sys.coupling.value(eps)
    off = _offsets(sys)
    total = off[-1]
    y = sys.config.center_array()
    dmat = np.zeros((total, total), dtype=complex)
    emat = np.zeros((total, total), dtype=complex)
    for i, gi in enumerate(sys.grids):
        sl_i = slice(off[i], off[i + 1])
        dmat[sl_i, sl_i] = bs_matrix(gi, lam[i], eps * k).matrix
        for j, gj in enumerate(sys.grids):
            if j == i:
                continue
            sep = y[i] - y[j]
            diff = eps * (gi.nodes[:, None, :] - gj.nodes[None, :, :]) + sep
            r = np.linalg.norm(diff, axis=-1)
            kern = np.exp(1j * k * r) / (FOUR_PI * r)
            emat[sl_i, slice(off[j], off[j + 1])] = (
                lam[i] * gi.b_vals[:, None] * kern
                * (gj.a_vals * gj.weights)[None, :])
    sizes = sys.block_sizes
    return (DiscreteOperator(dmat + eps * emat, sizes, k=complex(k), eps=eps),
            DiscreteOperator(dmat, sizes, k=complex(k), eps=eps),
            DiscreteOperator(emat, sizes, k=complex(k), eps=eps))


def e_limit(sys: ScaledSystem, k: complex) -> DiscreteOperator:
    """Rank-N limit of the off-diagonal part: |B> Ghat(k) <A|."""
    mat = b_cols(sys) @ gamma_hat(sys, k) @ a_rows(sys)
    return DiscreteOperator(mat.astype(complex), sys.block_sizes,
                            k=complex(k))


def _factor_check(mat: np.ndarray, name: str, sv_floor: float):
    """Cheap LU-based reciprocal-condition gate on an inversion factor.

    Only when the estimate trips is the exact smallest singular value
    computed for the error message.
    """
    lu, _ = lu_factor(mat, check_finite=False)
    rcond, _ = zgecon(lu, np.linalg.norm(mat, 1))
    if rcond < sv_floor:
        sv = np.linalg.svd(mat, compute_uv=False)
        raise SingularFactorError(
            f"{name} is numerically singular "
            f"(smallest singular value {sv[-1]:.2e})")


def scaled_inverse(sys: ScaledSystem, eps: float, k: complex,
                   diagnostics: bool = False, sv_floor: float = 1e-12):
    """eps (1 + M_eps(eps k))^{-1} through the factored form.

    The inverse is always computed as
    (1 + eps (1+D)^{-1} E)^{-1} (1+D)^{-1} (times eps), never by direct
    inversion of 1 + M.  With diagnostics=True also returns the smallest
    singular value of the outer factor.
    """
    _, d_op, e_op = assemble_m_eps(sys, eps, k)
    total = d_op.matrix.shape[0]
    d_fact = np.eye(total) + d_op.matrix
    _factor_check(d_fact, "1 + D", sv_floor)
    d_inv = np.linalg.inv(d_fact)
    outer = np.eye(total) + eps * (d_inv @ e_op.matrix)
    _factor_check(outer, "outer factor", sv_floor)
    mat = eps * np.linalg.solve(outer, d_inv)
    op = DiscreteOperator(mat, sys.block_sizes, k=complex(k), eps=eps)
    if diagnostics:
        sv_o = np.linalg.svd(outer, compute_uv=False)
        return op, float(sv_o[-1])
    return op


def limit_blocks(sys: ScaledSystem, k: complex):
    """Per-center limit of eps (1 + D)^{-1}: finite rank on each grid.

    Resonant centers contribute
    -(lambda'(0) + ik |(a, phi_1)|^2 / 4 pi)^{-1} phi_1 (x) psi_1;
    higher-dimensional kernels add -lambda'(0)^{-1} sum_{j>=2}
    phi_j (x) psi_j; regular centers contribute the zero block.
    """
    blocks = []
    for j, (rep, grid) in enumerate(zip(sys.reports, sys.grids)):
        blk = np.zeros((grid.size, grid.size), dtype=complex)
        ndim = rep.kernel_dimension
        if ndim > 0:
            slope = sys.coupling.slopes[j]
            w = grid.weights
            start = 0
            if rep.classification in ("case-a", "case-c"):
                a_phi_sq = (FOUR_PI * abs(rep.l_values[0])) ** 2
                pref = -1.0 / (slope + 1j * k * a_phi_sq / FOUR_PI)
                blk += pref * np.outer(rep.phis[:, 0],
                                       w * np.conj(rep.psis[:, 0]))
                start = 1
            for m in range(start, ndim):
                blk += (-1.0 / slope) * np.outer(
                    rep.phis[:, m], w * np.conj(rep.psis[:, m]))
        blocks.append(blk)
    return blocks


def limit_operator(sys: ScaledSystem, k: complex) -> DiscreteOperator:
    """Limit of eps (1 + M_eps(eps k))^{-1}: (1 + Lt |B>Ghat<A|)^{-1} Lt."""
    off = _offsets(sys)
    lt = np.zeros((off[-1], off[-1]), dtype=complex)
    for j, blk in enumerate(limit_blocks(sys, k)):
        lt[off[j]:off[j + 1], off[j]:off[j + 1]] = blk
    big = np.eye(off[-1]) + lt @ b_cols(sys) @ gamma_hat(sys, k) @ a_rows(sys)
    return DiscreteOperator(np.linalg.solve(big, lt), sys.block_sizes,
                            k=complex(k))


def sandwich(sys: ScaledSystem, eps: float, k: complex) -> np.ndarray:
    """N x N matrix <A| eps (1 + M_eps(eps k))^{-1} |B>."""
    op = scaled_inverse(sys, eps, k)
    return a_rows(sys) @ op.matrix @ b_cols(sys)


def sandwich_limit(sys: ScaledSystem, k: complex) -> np.ndarray:
    """N x N limit of the sandwich via the finite-rank reduction.

    Equals minus the inverse interaction matrix on the resonant block
    and zero on rows/columns of regular centers.
    """
    off = _offsets(sys)
    lt = np.zeros((off[-1], off[-1]), dtype=complex)
    for j, blk in enumerate(limit_blocks(sys, k)):
        lt[off[j]:off[j + 1], off[j]:off[j + 1]] = blk
    arows, bcols = a_rows(sys), b_cols(sys)
    factor = deift_reduce(lt, bcols, gamma_hat(sys, k), arows)
    return factor @ (arows @ lt @ bcols)


def sandwich_residual(sys: ScaledSystem, eps: float, k: complex) -> float:
    """Relative distance of the sandwich to -Gamma(k)^{-1} on the
    resonant block, the central convergence observable."""
    mask = sys.resonant
    s = sandwich(sys, eps, k)[np.ix_(mask, mask)]
    ref = -np.linalg.inv(build_gamma(sys.limit_config(), k).entries)
    return float(np.linalg.norm(s - ref) / np.linalg.norm(ref))


@dataclass(frozen=True)
class EndtermTrace:
    """Grid-norm errors of the eps^{1/2}-weighted free-resolvent factor."""

    eps_list: tuple
    errors_plus: tuple
    errors_minus: tuple
    limit_plus: complex
    limit_minus: complex
    bound: float

    def decreasing(self) -> bool:
        e = self.errors_plus
        return all(e[i] > e[i + 1] for i in range(len(e) - 1))


def endterm_check(potential: Potential, u, k, eps_list,
                  resolution: int = 8) -> EndtermTrace:
    """Errors of eps^{1/2} a G0(+-k eps) U_eps* u against a(x) <Gg_{+-k}, u>.

    The scaled factor is evaluated exactly through the change of
    variables: at a grid node x it is the Green pairing of u at the
    shifted point eps x, so the trace isolates pure shift error.  For
    Im k > 0 the analytic Hilbert-Schmidt bound
    ||a|| ||u|| / sqrt(8 pi Im k) is reported alongside.

    u is a WavePacket or a finite superposition given as a sequence of
    (coefficient, WavePacket) pairs; the latter permits inputs whose
    Green pairing vanishes, where the limit is the zero function.
    """
    from .birman import build_nystrom
    grid = build_nystrom(potential, resolution)
    k = complex(k)
    complex_mode = k.imag > 0
    if not complex_mode and (k.imag != 0 or k.real <= 0):
        raise DomainError("k must be positive real or have Im k > 0")
    terms = [(1.0, u)] if isinstance(u, WavePacket) else [
        (complex(c), p) for c, p in u]

    def pairing(shifts, sign):
        total = 0.0
        for c, pk in terms:
            if complex_mode:
                vals = resolvent_pairing(pk, k, extra_shifts=shifts)
            else:
                vals = green_pairing(pk, k.real, sign, extra_shifts=shifts)
            total = total + c * np.atleast_1d(vals)
        return total

    origin = np.zeros((1, 3))
    lim_p = complex(pairing(origin, +1)[0])
    lim_m = lim_p if complex_mode else complex(pairing(origin, -1)[0])
    w, a = grid.weights, grid.a_vals
    errs_p, errs_m = [], []
    for eps in eps_list:
        shifts = eps * grid.nodes
        vp = pairing(shifts, +1)
        errs_p.append(float(np.sqrt(np.sum(w * np.abs(a * (vp - lim_p))**2))))
        if complex_mode:
            errs_m.append(errs_p[-1])
        else:
            vm = pairing(shifts, -1)
            errs_m.append(float(np.sqrt(
                np.sum(w * np.abs(a * (vm - lim_m))**2))))
    a_norm = float(np.sqrt(np.sum(w * a**2)))
    u_norm_sq = sum(c1 * np.conj(c2) * packet_inner(p1, p2)
                    for c1, p1 in terms for c2, p2 in terms)
    bound = (a_norm * float(np.sqrt(abs(u_norm_sq)))
             / np.sqrt(8.0 * np.pi * k.imag) if complex_mode else np.inf)
    return EndtermTrace(tuple(float(e) for e in eps_list),
                        tuple(errs_p), tuple(errs_m), lim_p, lim_m, bound)


def wave_pairing_eps(sys: ScaledSystem, eps: float, u: WavePacket,
                     v: WavePacket, nquad: int = 24) -> complex:
    """<W+ u, v> for the scaled system via the stationary k-integral.

    The two outer free-resolvent factors are evaluated through the exact
    eps^{1/2} change-of-variable identities (Green pairings of the
    packets at the points eps x + y_j); the remaining eps sits on the
    factored inverse, so the integrand is exact up to the Nystrom
    quadrature of the inverse.
    """
    _check_separation(sys, eps)
    lo, hi = u.k_support
    if sys.resonant.any():
        _check_nonsingular(sys.limit_config(), lo, hi)
    lam = sys.coupling.value(eps)
    y = sys.config.center_array()
    shifts = [eps * g.nodes + y[j] for j, g in enumerate(sys.grids)]
    knodes, kweights = gauss_segment(lo, hi, nquad)
    corr = 0.0 + 0.0j
    for kk, wk in zip(knodes, kweights):
        op = scaled_inverse(sys, eps, -kk)
        rhs = np.concatenate([
            lam[j] * g.b_vals
            * np.atleast_1d(delta_pairing(u, kk, extra_shifts=shifts[j]))
            for j, g in enumerate(sys.grids)])
        app = op.matrix @ rhs
        off = _offsets(sys)
        inner = 0.0 + 0.0j
        for j, g in enumerate(sys.grids):
            gvals = g.a_vals * np.atleast_1d(
                green_pairing(v, kk, +1, extra_shifts=shifts[j]))
            inner += np.sum(g.weights * app[off[j]:off[j + 1]]
                            * np.conj(gvals))
        corr += wk * kk * inner
    return packet_inner(u, v) - _PREF * corr


def resolvent_eps_apply(sys: ScaledSystem, eps: float, k: complex,
                        u: WavePacket, eval_points) -> np.ndarray:
    """Resolvent of the scaled Hamiltonian at energy k^2 applied to u.

    Free resolvent minus the finite-rank correction routed through the
    factored inverse; both outer factors use the exact change-of-variable
    identities, so only the Nystrom grids discretize anything.
    """
    if np.imag(k) <= 0:
        raise DomainError("scaled resolvent requires Im k > 0")
    _check_separation(sys, eps)
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    lam = sys.coupling.value(eps)
    y = sys.config.center_array()
    op = scaled_inverse(sys, eps, k)
    rhs = np.concatenate([
        lam[j] * g.b_vals * np.atleast_1d(
            resolvent_pairing(u, k, extra_shifts=eps * g.nodes + y[j]))
        for j, g in enumerate(sys.grids)])
    c = op.matrix @ rhs
    off = _offsets(sys)
    corr = np.zeros(eval_points.shape[0], dtype=complex)
    for j, g in enumerate(sys.grids):
        src = y[j] + eps * g.nodes
        diff = eval_points[:, None, :] - src[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        if np.min(r) < 1e-12:
            raise DomainError("evaluation point hits a scaled support node")
        kern = np.exp(1j * k * r) / (FOUR_PI * r)
        corr += kern @ (g.weights * g.a_vals * c[off[j]:off[j + 1]])
    return free_resolvent_packet(u, k, eval_points) - corr


@dataclass(frozen=True)
class ConvergenceRecord:
    """One row of an epsilon sweep."""

    eps: float
    wave_err: float
    resolvent_err: float
    min_sv: float
    seconds: float
    note: str = ""


def convergence_sweep(sys: ScaledSystem, eps_list, observables: dict):
    """Wave-pairing and resolvent errors against the point-interaction
    references, one record per epsilon.

    observables: "wave_u"/"wave_v" packets, "resolvent_k" (default 2i),
    "eval_points" for the resolvent comparison, optional "wave_nquad".
    Failures of a sub-operation are recorded in the note and the sweep
    continues.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise DomainError("sweep needs at least three epsilon values")
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise DomainError("eps_list must be strictly decreasing")
    u, v = observables["wave_u"], observables["wave_v"]
    k_res = complex(observables.get("resolvent_k", 2j))
    pts = np.atleast_2d(np.asarray(observables["eval_points"], dtype=float))
    nquad = int(observables.get("wave_nquad", 24))
    ref_config = sys.limit_config()
    ref_wave = wave_pairing_point(ref_config, u, v)
    ref_res = apply_point_resolvent(ref_config, k_res, u, pts)
    records = []
    for eps in eps_list:
        t0 = time.perf_counter()
        try:
            _, min_sv = scaled_inverse(sys, eps, k_res, diagnostics=True)
            wp = wave_pairing_eps(sys, eps, u, v, nquad=nquad)
            rv = resolvent_eps_apply(sys, eps, k_res, u, pts)
            rec = ConvergenceRecord(
                eps, abs(wp - ref_wave),
                float(np.sqrt(np.mean(np.abs(rv - ref_res) ** 2))),
                min_sv, time.perf_counter() - t0)
        except (DomainError, SingularFactorError,
                np.linalg.LinAlgError) as err:
            rec = ConvergenceRecord(eps, np.inf, np.inf, 0.0,
                                    time.perf_counter() - t0,
                                    note=f"failed: {err}")
        records.append(rec)
    return records


def sweep_trend(records) -> str:
    """"decreasing" iff both error columns strictly decrease."""
    ok = all(r.note == "" for r in records)
    waves = [r.wave_err for r in records]
    ress = [r.resolvent_err for r in records]
    dec = (all(a > b for a, b in zip(waves, waves[1:]))
           and all(a > b for a, b in zip(ress, ress[1:])))
    return "decreasing" if ok and dec else "not-decreasing"
