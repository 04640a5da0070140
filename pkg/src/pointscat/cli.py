"""Config-driven experiment runner.

A single JSON file selects one of six scenarios (spectrum, gamma-scan,
waveop, threshold, scaling-sweep, identities) and its parameters.  Every
run writes, into the output directory: a results.csv table, a
summary.json with the pass/fail verdicts, a plain-text run.log, and the
fully resolved configuration for reproducibility.  Exit codes: 0 all
checks passed, 1 numeric failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import birman as birman_mod
from . import opalg
from . import scaling as scaling_mod
from .gamma import PointConfig, find_bound_states, scan_real_axis
from .green import BumpProfile, DomainError, WavePacket
from .waveop import isometry_defect, orthonormal_family


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


SCENARIOS = ("spectrum", "gamma-scan", "waveop", "threshold",
             "scaling-sweep", "identities")


def _fmt(x) -> str:
    """17 significant digits: lossless round trip of a double."""
    return format(float(x), ".17g")


def _require(cfg: dict, field: str, kind=None):
    if field not in cfg:
        raise ConfigError(f"missing field: {field!r}")
    val = cfg[field]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"field {field!r} has wrong type "
                          f"({type(val).__name__})")
    return val


def _packet_from_spec(spec: dict, name: str) -> WavePacket:
    try:
        prof = BumpProfile(float(spec["r1"]), float(spec["r2"]),
                           float(spec.get("amplitude", 1.0)))
        return WavePacket(prof, shift=tuple(spec.get("shift", (0, 0, 0))),
                          momentum=tuple(spec.get("momentum", (0, 0, 0))))
    except (KeyError, TypeError, DomainError) as err:
        raise ConfigError(f"bad packet spec {name!r}: {err}") from err


def _potential_from_spec(label: str):
    """Extend the label grammar with critical(radius,resolution)."""
    if label.startswith("critical("):
        inner = label[len("critical("):].rstrip(")")
        parts = inner.split(",")
        if len(parts) != 2:
            raise ConfigError(f"bad potential label {label!r}")
        try:
            return birman_mod.critical_well(float(parts[0]), int(parts[1]))
        except (ValueError, DomainError) as err:
            raise ConfigError(f"bad potential label {label!r}: {err}") from err
    try:
        return birman_mod.potential_from_label(label)
    except DomainError as err:
        raise ConfigError(str(err)) from err


def _point_config(cfg: dict) -> PointConfig:
    centers = _require(cfg, "centers", list)
    strengths = _require(cfg, "strengths", list)
    try:
        return PointConfig(tuple(map(tuple, centers)), tuple(strengths))
    except (DomainError, TypeError, ValueError) as err:
        raise ConfigError(f"bad centers/strengths: {err}") from err


def _eval_points(cfg: dict, rng: np.random.Generator) -> np.ndarray:
    spec = cfg.get("eval_points", {"count": 20, "box": 2.0})
    if isinstance(spec, list):
        return np.atleast_2d(np.asarray(spec, dtype=float))
    count = int(spec.get("count", 20))
    box = float(spec.get("box", 2.0))
    if count < 1 or box <= 0:
        raise ConfigError("eval_points needs count >= 1 and box > 0")
    return rng.uniform(-box, box, size=(count, 3))


def _run_spectrum(cfg, rng, log):
    config = _point_config(cfg)
    kappa_max = float(cfg.get("kappa_max", 10.0))
    roots = find_bound_states(config, kappa_max)
    rows = [("kappa", "multiplicity", "energy")]
    for kappa, mult in roots:
        rows.append((_fmt(kappa), str(mult), _fmt(-kappa**2)))
    log.append(f"found {len(roots)} bound state(s) on (0, {kappa_max}]")
    summary = {"bound_states": [{"kappa": k, "multiplicity": m}
                                for k, m in roots]}
    return True, rows, summary


def _run_gamma_scan(cfg, rng, log):
    config = _point_config(cfg)
    k_lo, k_hi = (float(v) for v in cfg.get("k_range", (0.1, 10.0)))
    nodes = int(cfg.get("nodes", 200))
    smin = scan_real_axis(config, k_lo, k_hi, nodes=nodes)
    ok = smin > 0.0
    log.append(f"real-axis scan on [{k_lo}, {k_hi}]: "
               f"min singular value {smin:.6e}")
    rows = [("k_min", "k_max", "min_singular_value"),
            (_fmt(k_lo), _fmt(k_hi), _fmt(smin))]
    return ok, rows, {"min_singular_value": smin, "positive": ok}


def _run_waveop(cfg, rng, log):
    config = _point_config(cfg)
    fam = cfg.get("family", {"count": 2, "lo": 1.0, "hi": 2.0})
    family = orthonormal_family(int(fam.get("count", 2)),
                                float(fam.get("lo", 1.0)),
                                float(fam.get("hi", 2.0)))
    coeffs = cfg.get("coefficients", [1.0] * len(family))
    if len(coeffs) != len(family):
        raise ConfigError("one coefficient per family member")
    tol = float(cfg.get("tolerance", 1e-3))
    defect = isometry_defect(config, coeffs, family)
    ok = defect < tol
    log.append(f"isometry defect {defect:.6e} (tolerance {tol:g})")
    rows = [("family_size", "defect", "tolerance"),
            (str(len(family)), _fmt(defect), _fmt(tol))]
    return ok, rows, {"isometry_defect": defect, "tolerance": tol}


def _run_threshold(cfg, rng, log):
    labels = _require(cfg, "potentials", list)
    if len(labels) != 1:
        raise ConfigError("threshold scenario takes exactly one potential")
    pot = _potential_from_spec(labels[0])
    slopes = cfg.get("slopes", [-1.0])
    coupling = birman_mod.CouplingFamily(tuple(slopes[:1]))
    resolutions = cfg.get("resolutions", [8, 12])
    report = birman_mod.threshold_classify(pot, coupling, resolutions)
    ok = report.classification != "indeterminate"
    log.append(f"classification: {report.classification} "
               f"(kernel dimension {report.kernel_dimension})")
    rows = [("resolution", "min_singular_value")]
    rows += [(str(r), _fmt(s)) for r, s in report.trace]
    summary = {"classification": report.classification,
               "kernel_dimension": report.kernel_dimension,
               "alpha": report.alpha,
               "trace": [[r, s] for r, s in report.trace]}
    return ok, rows, summary


def _build_system(cfg):
    centers = _require(cfg, "centers", list)
    labels = _require(cfg, "potentials", list)
    slopes = _require(cfg, "slopes", list)
    if not len(centers) == len(labels) == len(slopes):
        raise ConfigError("centers, potentials and slopes must have "
                          "matching lengths")
    pots = tuple(_potential_from_spec(lbl) for lbl in labels)
    coupling = birman_mod.CouplingFamily(tuple(float(s) for s in slopes))
    resolutions = cfg.get("resolutions", [6, 8])
    return scaling_mod.build_scaled_system(centers, pots, coupling,
                                           resolutions)


def _run_scaling_sweep(cfg, rng, log):
    sys_ = _build_system(cfg)
    eps_list = [float(e) for e in cfg.get("eps_list", (0.4, 0.2, 0.1, 0.05))]
    packets = cfg.get("packets", {})
    u = _packet_from_spec(packets.get("u", {"r1": 1.0, "r2": 2.0}), "u")
    v = _packet_from_spec(packets.get("v", {"r1": 1.0, "r2": 2.0,
                                            "shift": [0.3, 0.1, 0.0]}), "v")
    k_res = cfg.get("resolvent_k", [0.0, 2.0])
    observables = {"wave_u": u, "wave_v": v,
                   "resolvent_k": complex(float(k_res[0]), float(k_res[1])),
                   "eval_points": _eval_points(cfg, rng)}
    records = scaling_mod.convergence_sweep(sys_, eps_list, observables)
    trend = scaling_mod.sweep_trend(records)
    ok = trend == "decreasing"
    for rec in records:
        log.append(f"eps={rec.eps:g}: wave_err={rec.wave_err:.6e} "
                   f"resolvent_err={rec.resolvent_err:.6e}"
                   + (f" [{rec.note}]" if rec.note else ""))
    log.append(f"trend verdict: {trend}")
    rows = emit_rows(records)
    summary = {
        "trend": trend,
        "alphas": [r.alpha for r in sys_.reports],
        "classifications": [r.classification for r in sys_.reports],
        "records": [{"epsilon": r.eps, "wave_err": r.wave_err,
                     "resolvent_err": r.resolvent_err, "min_sv": r.min_sv,
                     "note": r.note} for r in records]}
    return ok, rows, summary


def _run_identities(cfg, rng, log):
    instances = int(cfg.get("instances", 100))
    tol = float(cfg.get("tolerance", 1e-12))
    size = int(cfg.get("size", 12))
    rows = [("instance", "projected_inversion", "finite_rank_reduction",
             "block_inversion")]
    worst = 0.0
    for i in range(instances):
        a = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        a = a + size * np.eye(size)
        basis = np.linalg.qr(rng.normal(size=(size, 3)))[0]
        s = basis @ basis.conj().T
        inv, verdict = opalg.jn_invert(a, s)
        r1 = (np.inf if verdict is not None
              else float(np.linalg.norm(inv - np.linalg.inv(a))
                         / np.linalg.norm(np.linalg.inv(a))))
        n_small = 3
        lt = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        bc = rng.normal(size=(size, n_small))
        ar = rng.normal(size=(n_small, size))
        gh = rng.normal(size=(n_small, n_small))
        gh = gh - np.diag(np.diag(gh))
        r2 = opalg.reduction_residual(lt, bc, gh, ar)
        n1, n2 = 2, 3
        v = (rng.normal(size=(n2, n2)) + 1j * rng.normal(size=(n2, n2))
             + n2 * np.eye(n2))
        blocks = {nm: rng.normal(size=shp) for nm, shp in
                  [("w", (n1, n1)), ("x", (n1, n2)),
                   ("y", (n2, n1)), ("z", (n2, n2))]}
        lhs = opalg.block_inverse(v, blocks["z"], upper_size=n1)
        rhs = opalg.block_inverse_bruteforce(v, blocks["w"], blocks["x"],
                                             blocks["y"], blocks["z"])
        r3 = float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1.0))
        worst = max(worst, r1, r2, r3)
        rows.append((str(i), _fmt(r1), _fmt(r2), _fmt(r3)))
    ok = worst < tol
    log.append(f"{instances} randomized instances, max residual "
               f"{worst:.3e} (tolerance {tol:g})")
    return ok, rows, {"instances": instances, "max_residual": worst,
                      "tolerance": tol}


_RUNNERS = {"spectrum": _run_spectrum, "gamma-scan": _run_gamma_scan,
            "waveop": _run_waveop, "threshold": _run_threshold,
            "scaling-sweep": _run_scaling_sweep,
            "identities": _run_identities}


def emit_rows(records):
    """CSV rows for convergence records, sorted descending by epsilon."""
    if not records:
        raise ConfigError("no records to report")
    rows = [("epsilon", "wave_err", "resolvent_err", "min_sv", "seconds")]
    for rec in sorted(records, key=lambda r: -r.eps):
        rows.append((_fmt(rec.eps), _fmt(rec.wave_err),
                     _fmt(rec.resolvent_err), _fmt(rec.min_sv),
                     _fmt(rec.seconds)))
    return rows


def emit_report(records, out_dir):
    """Write the sweep CSV and a JSON summary with the trend verdict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = emit_rows(records)
    csv_path = out / "results.csv"
    csv_path.write_text("\n".join(",".join(r) for r in rows) + "\n")
    summary = {"trend": scaling_mod.sweep_trend(records),
               "rows": len(rows) - 1}
    json_path = out / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def run_experiment(config: dict, out_dir, seed: int = 0):
    """Execute one scenario; write results.csv, summary.json, run.log and
    the resolved config.  Returns the exit status."""
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    scenario = _require(config, "scenario", str)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; "
                          f"choose from {', '.join(SCENARIOS)}")
    resolved = dict(config)
    resolved["seed"] = int(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(int(seed))
    log = [f"scenario: {scenario}", f"seed: {seed}"]
    status = 0
    try:
        ok, rows, summary = _RUNNERS[scenario](config, rng, log)
    except ConfigError:
        raise
    except Exception as err:
        log.append(f"numeric failure: {err}")
        (out / "run.log").write_text("\n".join(log) + "\n")
        (out / "config.resolved.json").write_text(
            json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        summary = {"scenario": scenario, "passed": False,
                   "error": str(err)}
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return 1
    if not ok:
        status = 1
    log.append("verdict: " + ("pass" if ok else "fail"))
    (out / "results.csv").write_text(
        "\n".join(",".join(r) for r in rows) + "\n")
    summary = {"scenario": scenario, "passed": ok, **summary}
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "run.log").write_text("\n".join(log) + "\n")
    (out / "config.resolved.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pointscat",
        description="point-interaction scattering experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment config")
    runp.add_argument("config", help="path to the JSON config")
    runp.add_argument("--out", default="pointscat-out",
                      help="output directory")
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--threads", type=int, default=0,
                      help="cap BLAS threads (0 = leave unchanged)")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    try:
        config = json.loads(text)
    except json.JSONDecodeError as err:
        print(f"config error: line {err.lineno}, column {err.colno}: "
              f"{err.msg}", file=sys.stderr)
        return 2
    try:
        if args.threads > 0:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return run_experiment(config, args.out, seed=args.seed)
        return run_experiment(config, args.out, seed=args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
