"""Command-line entry point.

Exit codes: 0 success, 2 validation or assumption failure, 3 consensus
condition failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import graph, oracle, scenario, simulate, synthesis
from .dynamics import is_stabilizable, mahler_measure
from .errors import (AssumptionViolated, ConditionFails, DeltaOutOfRange, NotStabilizable,
                     NumericalError, ValidationError)
from .graph import LEADER_FOLLOWER
from .mare import admissible_delta_bound, riccati_gain, solve_mare

log = logging.getLogger("msconsensus")

EXIT_OK, EXIT_VALIDATION, EXIT_CONDITION, EXIT_NUMERICAL = 0, 2, 3, 4

P_REL_TOL = 0.01
K_ABS_TOL = 1e-3
MSD_SIGMAS = 3.0
FINAL_MEAN_FRACTION = 0.01


def _emit(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# -- analysis ----------------------------------------------------------------

def analyze(sf: scenario.ScenarioFile) -> dict:
    m, t = sf.model, sf.topology
    if not is_stabilizable(m):
        raise NotStabilizable("Assumption 1: (A, B) is not stabilizable")
    lam_lo, lam_hi = synthesis.extreme_eigenvalues(t)
    if t.mode == LEADER_FOLLOWER:
        l1, _ = graph.follower_laplacian(t)
        eig = [float(v) for v in np.linalg.eigvalsh(l1)]
    else:
        eig = list(graph.laplacian_spectrum(t).eigenvalues)
    mahler = mahler_measure(m)
    sigma = synthesis.sigma_effective(t)
    alpha = synthesis.default_alpha(t)
    report = synthesis.check_condition(m, t, alpha)
    out = {
        "mode": t.mode,
        "spectrum": {"matrix": "L1" if t.mode == LEADER_FOLLOWER else "L", "eigenvalues": eig,
                     "lambda2": lam_lo, "lambdaN": lam_hi, "eigenratio": lam_lo / lam_hi},
        "mahler_measure": mahler,
        "sigma_effective": sigma,
        "alpha_optimal": alpha,
        "delta_sq_interval": {"lower": report.max_lhs, "upper": admissible_delta_bound(m),
                              "nonempty": report.holds},
        "condition": report.to_dict(),
        "ideal_channel_condition": synthesis.noise_free_condition(lam_lo, lam_hi, mahler),
    }
    if sf.alpha is not None:
        out["condition_at_file_alpha"] = synthesis.check_condition(m, t, sf.alpha).to_dict()
    return out


def _gain(sf: scenario.ScenarioFile, require_condition: bool) -> synthesis.ProtocolGain:
    return synthesis.synthesize(sf.model, sf.topology, sf.Q, sf.alpha, sf.delta_sq,
                                require_condition=require_condition)


def verify(sf: scenario.ScenarioFile) -> dict:
    gain = _gain(sf, require_condition=False)
    s = sf.scenario(gain)
    rho = oracle.ms_spectral_radius(oracle.build_generators(s))
    stable = rho < 1.0 - oracle.STABILITY_MARGIN
    report = synthesis.check_condition(sf.model, sf.topology, gain.alpha)
    return {"mode": sf.topology.mode, "spectral_radius": rho, "is_ms_stable": stable,
            "condition_holds": report.holds, "conservative_flag": stable and not report.holds,
            "condition_report": report.to_dict(), "gain": gain.to_dict()}


# -- CSV output ----------------------------------------------------------------

def write_trajectory_csv(ens: simulate.TrajectoryEnsemble, path) -> None:
    T, H1, N, n = ens.states.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "k", "agent", "state_component_index", "value"])
        for tr in range(T):
            block = ens.states[tr]
            for k in range(H1):
                for i in range(N):
                    for c in range(n):
                        w.writerow([tr, k, i + 1, c + 1, repr(float(block[k, i, c]))])


def write_summary_csv(ens: simulate.TrajectoryEnsemble, path) -> None:
    _, N1, n = ens.mean_relative.shape
    rel_cols = [f"rel_x{i + 2}_{c + 1}" for i in range(N1) for c in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "msd", "msd_stderr"] + rel_cols)
        for k in range(len(ens.msd)):
            rel = [repr(float(v)) for v in ens.mean_relative[k].reshape(-1)]
            w.writerow([k, repr(float(ens.msd[k])), repr(float(ens.msd_stderr[k]))] + rel)


def simulate_to(s: simulate.Scenario, out_dir, workers: int = 1) -> simulate.TrajectoryEnsemble:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ens = simulate.run_ensemble(s, workers=workers)
    write_trajectory_csv(ens, out / "trajectory.csv")
    write_summary_csv(ens, out / "summary.csv")
    return ens


def msd_agreement(ens: simulate.TrajectoryEnsemble, exact: np.ndarray) -> dict:
    """Largest deviation of the Monte Carlo msd from the exact value, in standard errors."""
    dev = np.abs(ens.msd - exact)
    slack = 1e-9 * np.maximum(np.abs(exact), 1e-300)
    ok = dev <= MSD_SIGMAS * ens.msd_stderr + slack
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(ens.msd_stderr > 0, dev / ens.msd_stderr, 0.0)
    return {"max_abs_z": float(np.max(z)), "within_3_stderr": bool(np.all(ok)),
            "steps_outside": [int(k) for k in np.flatnonzero(~ok)]}


# -- reproduction of the worked example -------------------------------------

def _compare_gain(model, Q, delta_sq) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeltaOutOfRange)
        sol = solve_mare(model, Q, delta_sq)
    K = riccati_gain(model, sol.P)
    p_rel = np.abs(sol.P - scenario.PUBLISHED_P) / np.abs(scenario.PUBLISHED_P)
    k_abs = np.abs(K - scenario.PUBLISHED_K)
    return {"delta_sq": delta_sq, "P": sol.P.tolist(), "K": K.tolist(),
            "P_max_rel_error": float(p_rel.max()), "K_max_abs_error": float(k_abs.max()),
            "P_within_tolerance": bool(p_rel.max() <= P_REL_TOL),
            "K_within_tolerance": bool(k_abs.max() <= K_ABS_TOL)}


def reproduce_paper(out_dir, trials: int | None = None, horizon: int | None = None,
                    seed: int | None = None, workers: int = 1) -> dict:
    sf = scenario.example_scenario()
    overrides = {}
    if trials is not None:
        overrides["trials"] = trials
    if horizon is not None:
        overrides["horizon"] = horizon
    if seed is not None:
        overrides["noise"] = scenario.NoiseSpec(sf.noise.distribution, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario.dump(sf, out / "scenario.json")

    analysis = analyze(sf)
    _emit(analysis, out / "analysis.json")
    gain = _gain(sf, require_condition=True)
    _emit(gain.to_dict(), out / "gain.json")

    s = sf.scenario(gain, **overrides)
    ens = simulate_to(s, out, workers)
    exact = oracle.exact_msd_trajectory(s)
    verdict = verify(sf)
    _emit(verdict, out / "verify.json")

    rel0 = np.linalg.norm(ens.mean_relative[0])
    relT = np.linalg.norm(ens.mean_relative[-1])
    cond = synthesis.check_condition(sf.model, sf.topology, scenario.PUBLISHED_ALPHA)
    manifest = {
        "scenario_version": scenario.EXAMPLE_SCENARIO_VERSION,
        "published": {"P": scenario.PUBLISHED_P.tolist(), "K": scenario.PUBLISHED_K.tolist(),
                      "alpha": scenario.PUBLISHED_ALPHA, "delta_sq": scenario.PUBLISHED_DELTA_SQ,
                      "lambda2": 1.0, "lambdaN": 4.0},
        "tolerances": {"P_rel": P_REL_TOL, "K_abs": K_ABS_TOL, "msd_stderr_multiple": MSD_SIGMAS,
                       "final_mean_fraction": FINAL_MEAN_FRACTION},
        "gain_at_printed_delta_sq": _compare_gain(sf.model, sf.Q, scenario.PUBLISHED_DELTA_SQ),
        "gain_at_delta_0.9": _compare_gain(sf.model, sf.Q, 0.81),
        "computed": {"alpha": gain.alpha, "delta_sq": gain.delta_sq,
                     "alpha_optimal": analysis["alpha_optimal"],
                     "alpha_matches": abs(analysis["alpha_optimal"] - scenario.PUBLISHED_ALPHA) <= 1e-12,
                     "lambda2": analysis["spectrum"]["lambda2"],
                     "lambdaN": analysis["spectrum"]["lambdaN"]},
        "condition": cond.to_dict(),
        "spectral_radius": verdict["spectral_radius"],
        "is_ms_stable": verdict["is_ms_stable"],
        "simulation": {"trials": s.trials, "horizon": s.horizon, "seed": s.noise.seed,
                       "distribution": s.noise.distribution,
                       "final_msd": float(ens.msd[-1]), "exact_final_msd": float(exact[-1]),
                       "msd_vs_oracle": msd_agreement(ens, exact),
                       "mean_relative_initial_norm": float(rel0),
                       "mean_relative_final_norm": float(relT),
                       "mean_relative_decayed": bool(relT < FINAL_MEAN_FRACTION * rel0)},
        "complete_graph_thresholds": oracle.complete_graph_thresholds(),
    }
    _emit(manifest, out / "manifest.json")
    return manifest


# -- argument handling ---------------------------------------------------------

def _cmd_analyze(args) -> int:
    _emit(analyze(scenario.load(args.file)))
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    sf = scenario.load(args.file)
    try:
        gain = _gain(sf, require_condition=True)
    except ConditionFails as exc:
        _emit({"error": str(exc), "condition_report": exc.report.to_dict()})
        return EXIT_CONDITION
    _emit(gain.to_dict(), args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    sf = scenario.load(args.file)
    gain = _gain(sf, require_condition=False)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.seed is not None:
        overrides["noise"] = scenario.NoiseSpec(sf.noise.distribution, args.seed)
    s = sf.scenario(gain, **overrides)
    ens = simulate_to(s, args.output, args.workers)
    print(f"final msd (k={s.horizon}): {ens.msd[-1]!r} +/- {ens.msd_stderr[-1]!r}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    _emit(verify(scenario.load(args.file)))
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    manifest = reproduce_paper(args.output, args.trials, args.horizon, args.seed, args.workers)
    sim = manifest["simulation"]
    print(f"spectral radius {manifest['spectral_radius']:.6f}; "
          f"msd within 3 stderr: {sim['msd_vs_oracle']['within_3_stderr']}; "
          f"manifest written to {Path(args.output) / 'manifest.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msconsensus",
                                description="Mean-square consensus over uncertain channels.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="spectra, Mahler measure and consensus condition")
    a.add_argument("file")
    a.set_defaults(func=_cmd_analyze)

    s = sub.add_parser("synthesize", help="compute the protocol gain")
    s.add_argument("file")
    s.add_argument("-o", "--output")
    s.set_defaults(func=_cmd_synthesize)

    m = sub.add_parser("simulate", help="Monte Carlo ensemble to CSV")
    m.add_argument("file")
    m.add_argument("-o", "--output", required=True)
    m.add_argument("--trials", type=int)
    m.add_argument("--horizon", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=_cmd_simulate)

    v = sub.add_parser("verify", help="moment-oracle verdict as JSON")
    v.add_argument("file")
    v.set_defaults(func=_cmd_verify)

    r = sub.add_parser("reproduce-paper", help="run the embedded six-agent example end to end")
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--trials", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=_cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, AssumptionViolated) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConditionFails as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
