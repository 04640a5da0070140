"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line with the measured quantity so the
suite doubles as a report when run with pytest -s.
"""

import numpy as np
import pytest

from pointscat import birman, opalg
from pointscat.gamma import PointConfig, find_bound_states, scan_real_axis
from pointscat.green import BumpProfile, WavePacket
from pointscat.krein import apply_point_resolvent
from pointscat.scaling import (build_scaled_system, resolvent_eps_apply,
                               sandwich_residual, wave_pairing_eps)
from pointscat.waveop import (isometry_defect, orthonormal_family,
                              wave_pairing_point)

EPS_SWEEP = (0.4, 0.2, 0.1, 0.05)


def report(name: str, ok: bool, detail: str):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def critical_report():
    depth = np.pi**2 / 4
    pot = birman.potential_from_label(f"well({depth},1.0)")
    return birman.threshold_classify(pot, birman.CouplingFamily((-1.0,)),
                                     [12, 16])


@pytest.fixture(scope="session")
def resonant_system():
    pots = tuple(birman.critical_well(0.01, 8) for _ in range(2))
    return build_scaled_system([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], pots,
                               birman.CouplingFamily((-0.1, -0.1)),
                               resolutions=(6, 8))


def test_01_bound_state_single_center():
    config = PointConfig(((0.0, 0.0, 0.0),), (-1.0 / (4 * np.pi),))
    roots = find_bound_states(config, 5.0)
    ok = len(roots) == 1 and abs(roots[0][0] - 1.0) < 1e-8
    kappa = roots[0][0] if roots else float("nan")
    report("bound state N=1", ok, f"kappa={kappa:.12f}, target 1 +- 1e-8")


def test_02_bound_state_two_centers():
    config = PointConfig(((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), (0.0, 0.0))
    roots = find_bound_states(config, 5.0)
    target = 0.5671433
    best = min((abs(k - target) for k, _ in roots), default=float("inf"))
    ok = best < 1e-6
    report("bound state N=2", ok,
           f"closest root within {best:.2e} of {target}, target 1e-6")


def test_03_randomized_operator_identities():
    rng = np.random.default_rng(7)
    size, n_small = 12, 3
    worst = 0.0
    for _ in range(100):
        a = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        a = a + size * np.eye(size)
        basis = np.linalg.qr(rng.normal(size=(size, 3)))[0]
        s = basis @ basis.conj().T
        inv, verdict = opalg.jn_invert(a, s)
        dense = np.linalg.inv(a)
        r1 = (np.inf if verdict is not None
              else float(np.linalg.norm(inv - dense) / np.linalg.norm(dense)))
        lt = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        bc = rng.normal(size=(size, n_small))
        ar = rng.normal(size=(n_small, size))
        gh = rng.normal(size=(n_small, n_small))
        gh = gh - np.diag(np.diag(gh))
        r2 = opalg.reduction_residual(lt, bc, gh, ar)
        n1, n2 = 2, 3
        v = (rng.normal(size=(n2, n2)) + 1j * rng.normal(size=(n2, n2))
             + n2 * np.eye(n2))
        z = rng.normal(size=(n2, n2))
        w = rng.normal(size=(n1, n1))
        x = rng.normal(size=(n1, n2))
        y = rng.normal(size=(n2, n1))
        lhs = opalg.block_inverse(v, z, upper_size=n1)
        rhs = opalg.block_inverse_bruteforce(v, w, x, y, z)
        r3 = float(np.linalg.norm(lhs - rhs)
                   / max(np.linalg.norm(rhs), 1.0))
        worst = max(worst, r1, r2, r3)
    ok = worst < 1e-12
    report("operator identities", ok,
           f"max residual {worst:.3e} over 100 instances, target 1e-12")


def test_04_threshold_detection(critical_report):
    rep = critical_report
    trace = dict(rep.trace)
    ok = (rep.classification == "case-a"
          and trace[12] < 5e-2
          and trace[12] / trace[16] >= 2.0)
    depth = np.pi**2 / 4
    for factor in (0.9, 1.1):
        pot = birman.potential_from_label(f"well({factor * depth},1.0)")
        other = birman.threshold_classify(
            pot, birman.CouplingFamily((-1.0,)), [12, 16])
        ok = ok and other.classification == "regular"
    report("threshold detection", ok,
           f"critical depth: {rep.classification}, "
           f"sv {trace[12]:.2e} -> {trace[16]:.2e}; "
           f"off-critical depths regular")


def test_05_resonance_asymptotics(critical_report):
    rep = critical_report
    _, ru = birman.resonance_profile(rep.grid, rep.phis[:, 0], [30.0])
    l_val = rep.l_values[0]
    rel = abs(ru[0] - l_val) / abs(l_val)
    ok = rel < 0.02
    report("resonance asymptotics", ok,
           f"r*u(30)={ru[0].real:.8f} vs L={l_val.real:.8f}, "
           f"relative {rel:.2e}, target 2e-2")


def test_06_sandwich_identity(resonant_system):
    residuals = [sandwich_residual(resonant_system, eps, 1.5)
                 for eps in EPS_SWEEP]
    ok = (all(a > b for a, b in zip(residuals, residuals[1:]))
          and residuals[-1] < 1e-3)
    report("sandwich identity", ok,
           "residuals " + ", ".join(f"{r:.2e}" for r in residuals)
           + " (strictly decreasing, final < 1e-3)")


def test_07_wave_operator_convergence(resonant_system):
    sys_ = resonant_system
    limit = sys_.limit_config()
    pairs = [
        (WavePacket(BumpProfile(1.0, 2.0)),
         WavePacket(BumpProfile(1.0, 2.0), shift=(0.3, 0.1, 0.0))),
        (WavePacket(BumpProfile(1.2, 2.2), shift=(0.0, 0.2, 0.0)),
         WavePacket(BumpProfile(1.4, 2.0), shift=(-0.2, 0.0, 0.1))),
        (WavePacket(BumpProfile(0.8, 1.6, 0.7)),
         WavePacket(BumpProfile(0.9, 1.7), shift=(0.1, -0.1, 0.2))),
    ]
    ok = True
    details = []
    for i, (u, v) in enumerate(pairs):
        ref = wave_pairing_point(limit, u, v)
        errs = [abs(wave_pairing_eps(sys_, eps, u, v) - ref)
                for eps in EPS_SWEEP]
        dec = all(a > b for a, b in zip(errs, errs[1:]))
        ok = ok and dec
        details.append(f"pair {i}: " + "->".join(f"{e:.2e}" for e in errs))
    report("wave operator convergence", ok, "; ".join(details))


def test_08_resolvent_convergence(resonant_system):
    sys_ = resonant_system
    limit = sys_.limit_config()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2.0, 2.0, size=(20, 3))
    u = WavePacket(BumpProfile(1.0, 2.0))
    ref = apply_point_resolvent(limit, 2j, u, pts)
    errs = [float(np.linalg.norm(
        resolvent_eps_apply(sys_, eps, 2j, u, pts) - ref))
        for eps in EPS_SWEEP]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = (all(a > b for a, b in zip(errs, errs[1:]))
          and all(1.5 <= r <= 2.5 for r in ratios))
    report("resolvent convergence", ok,
           "errors " + "->".join(f"{e:.2e}" for e in errs)
           + ", halving ratios " + ", ".join(f"{r:.2f}" for r in ratios))


def test_09_isometry():
    config = PointConfig(((0.0, 0.0, 0.0),), (0.3,))
    family = orthonormal_family(2, 1.0, 2.0)
    coeffs = [1.0, 0.5]
    coarse = isometry_defect(config, coeffs, family, nquad=20)
    default = isometry_defect(config, coeffs, family)
    ok = default < 1e-3 and default < coarse
    report("wave operator isometry", ok,
           f"relative defect {default:.2e} (target 1e-3), "
           f"coarse quadrature {coarse:.2e}")


def test_10_real_axis_nonsingularity():
    rng = np.random.default_rng(2026)
    worst = np.inf
    for _ in range(20):
        n = int(rng.integers(1, 5))
        while True:
            centers = rng.uniform(-3.0, 3.0, size=(n, 3))
            if n == 1:
                break
            d = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
            if np.min(d[np.triu_indices(n, 1)]) > 0.5:
                break
        strengths = rng.uniform(-1.0, 1.0, size=n)
        config = PointConfig(tuple(map(tuple, centers)), tuple(strengths))
        worst = min(worst, scan_real_axis(config, 0.1, 10.0, nodes=60))
    ok = worst > 0.0
    report("real axis nonsingularity", ok,
           f"min singular value {worst:.3e} over 20 random configs")
