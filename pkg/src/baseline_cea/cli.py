"""Command-line entry point.

Exit status is 0 on success, 1 on a numerical failure and 2 on bad usage,
unreadable input or an invalid configuration.  Every numeric output is
deterministic for a fixed seed; ``manifest.json`` records provenance and
timestamps and is the only file that changes between identical runs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
from importlib import resources
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from . import __version__
from .adjust import adjust_coefficients
from .config import AnalysisConfig, config_from_mapping, load_config
from .econ import CeacCurve, bootstrap_analysis, ceac, cep, default_grid
from .errors import BaselineCEAError, NumericalError
from .model_spec import BASIC, COVARIATE, INDEPENDENT, JOINT, ML_SLOPE, build_inputs, build_spec
from .pipeline import analyse, parse_model
from .plotting import plot_baseline_histograms, plot_ceac, plot_cep
from .sampler import McmcSettings, ols_fit
from .synth import PRESETS, generate, load_preset, load_scenario, simulate_trial
from .trial_data import (AC, CC, PER_ARM, baseline_means, case_partition, describe_missingness,
                         load_dataset, write_dataset)

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("baseline_cea")

USAGE = 2
NUMERICAL = 1

ALL_MODELS = tuple(f"{f}.{s}" for f in (INDEPENDENT, JOINT) for s in (BASIC, COVARIATE, ML_SLOPE))
REPORT_K = 20000.0


class UsageError(Exception):
    pass


def _dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False,
                               default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _finite(x):
    """JSON-safe float: non-finite values become None."""
    return float(x) if np.isfinite(x) else None


class Run:
    """Tracks outputs of one command and writes the manifest."""

    def __init__(self, args, command: str):
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}
        self.config_digest = ""
        self.seed = None

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def add(self, *paths) -> None:
        for p in paths:
            name = Path(p).name
            if name not in self.outputs:
                self.outputs.append(name)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config_sha256": self.config_digest,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs + ["manifest.json"]),
            "versions": {"baseline_cea": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
                         "python": platform.python_version()},
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        _dump(self.out / "manifest.json", manifest)


def _config(args) -> AnalysisConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else config_from_mapping({})
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _dataset(args, cfg: AnalysisConfig, run: Run):
    path = Path(args.data)
    if not path.is_file():
        raise UsageError(f"data file not found: {path}")
    run.inputs[path.name] = _digest(path)
    return load_dataset(path, cfg.schema)


# --------------------------------------------------------------------------
# describe
# --------------------------------------------------------------------------

def cmd_describe(args) -> int:
    run = Run(args, "describe")
    cfg = _config(args)
    run.config_digest = cfg.digest
    d = _dataset(args, cfg, run)
    report = describe_missingness(d)
    text = report.to_text()
    sys.stdout.write(text)
    run.path("missingness.txt").write_text(text)
    _dump(run.path("missingness.json"), report.to_dict())
    run.add(*plot_baseline_histograms(report, run.out / "baseline_histograms.svg"))
    run.finish()
    return 0


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------

def _model_overrides(args) -> dict:
    return parse_model(args.model) if getattr(args, "model", None) else {}


def cmd_fit(args) -> int:
    run = Run(args, "fit")
    cfg = _config(args)
    run.config_digest, run.seed = cfg.digest, cfg.seed
    d = _dataset(args, cfg, run)
    a = analyse(d, cfg, _model_overrides(args))
    a.draws.to_csv(run.path("draws.csv"))
    conv = a.convergence
    text = conv.to_text() if conv else "convergence diagnostics need at least 2 chains\n"
    sys.stdout.write(text)
    run.path("convergence.txt").write_text(text)
    _dump(run.path("convergence.json"), {
        "model": a.spec.label,
        "converged": conv.converged if conv else None,
        "parameters": conv.as_rows() if conv else [],
        "acceptance": {k: list(v) for k, v in a.draws.acceptance.items()},
        "flags": list(a.draws.flags),
    })
    for flag in a.draws.flags:
        log.warning(flag)
    if conv and not conv.converged:
        log.warning("R-hat above threshold for: %s", ", ".join(conv.flagged))
    run.finish()
    return 0


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

def _conventions(args) -> tuple[str, ...]:
    return {"cc": (CC,), "ac": (AC,), "both": (CC, AC)}[args.convention]


def _model_list(args) -> list[str]:
    if not args.model:
        return [""]
    if args.model == "all":
        return list(ALL_MODELS)
    return [m.strip() for m in args.model.split(",") if m.strip()]


def cmd_compare(args) -> int:
    run = Run(args, "compare")
    cfg = _config(args)
    run.config_digest, run.seed = cfg.digest, cfg.seed
    d = _dataset(args, cfg, run)
    grid = default_grid(args.wtp_max if args.wtp_max is not None else cfg.wtp_max, cfg.wtp_step)
    conventions = _conventions(args)
    curves, clouds, table = [], [], []
    summary = {"models": []}
    for model in _model_list(args):
        a = analyse(d, cfg, parse_model(model) if model else None)
        tag = a.spec.label
        entry = {"model": tag, "converged": a.convergence.converged if a.convergence else None,
                 "max_rhat": a.convergence.max_rhat if a.convergence else None,
                 "results": {}}
        for conv in conventions:
            res = a.result(conv)
            res.to_csv(run.path(f"adjusted_{tag}_{conv}.csv"))
            curve = ceac(res, grid)
            cloud = cep(res)
            curves.append(curve)
            clouds.append(cloud)
            s = res.summary()
            entry["results"][conv] = {"baseline_means": res.to_dict()["baseline_means"],
                                      "summary": s, "icer": _finite(cloud.icer),
                                      "icer_defined": cloud.icer_defined,
                                      "quadrants": cloud.quadrants,
                                      f"ceac_at_{int(REPORT_K)}": _ceac_at(curve, REPORT_K)}
            table.append([tag, conv, s["mu_e1"]["mean"], s["mu_e2"]["mean"], s["mu_c1"]["mean"],
                          s["mu_c2"]["mean"], s["delta_e"]["mean"], s["delta_c"]["mean"]])
        summary["models"].append(entry)
        if cfg.bootstrap and not (a.spec.joint or a.spec.multilevel):
            bs = bootstrap_analysis(d, a.spec, cfg.bootstrap, cfg.seed, cfg.pooling,
                                    cfg.covariates_at)
            entry["bootstrap"] = {"replicates": bs.B, "dropped": bs.dropped}
            for conv in conventions:
                res = bs.as_adjustment(conv)
                curve = ceac(res, grid)
                curves.append(CeacCurve(curve.grid, curve.p, conv, f"{tag}.bootstrap"))
                entry["bootstrap"][conv] = res.summary()

    with run.path("increments.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "convention", "mu_e1", "mu_e2", "mu_c1", "mu_c2", "delta_e",
                    "delta_c"])
        for row in table:
            w.writerow(row[:2] + [repr(float(x)) for x in row[2:]])
    _dump(run.path("summary.json"), summary)
    run.add(*plot_ceac(curves, run.out / "ceac.svg"))
    run.add(*plot_cep(clouds, run.out / "cep.svg", REPORT_K))
    _print_table(table)
    run.finish()
    return 0


def _ceac_at(curve, k):
    i = np.searchsorted(curve.grid, k)
    return float(curve.p[i]) if i < curve.grid.size and curve.grid[i] == k else None


def _print_table(table) -> None:
    print(f"{'model':<28} {'conv':<4} {'mu_e1':>8} {'mu_e2':>8} {'mu_c1':>9} {'mu_c2':>9} "
          f"{'delta_e':>9} {'delta_c':>9}")
    for m, conv, e1, e2, c1, c2, de, dc in table:
        print(f"{m:<28} {conv:<4} {e1:8.4f} {e2:8.4f} {c1:9.1f} {c2:9.1f} {de:9.4f} {dc:9.1f}")


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def _preset_config(name: str) -> AnalysisConfig:
    text = resources.files("baseline_cea").joinpath("presets", f"{name}.analysis.toml")
    return config_from_mapping(tomllib.loads(text.read_text()))


def _scenario(args):
    if args.preset and args.scenario:
        raise UsageError("give either --preset or --scenario, not both")
    if args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        return load_preset(args.preset)
    if args.scenario:
        if not Path(args.scenario).is_file():
            raise UsageError(f"scenario file not found: {args.scenario}")
        return load_scenario(args.scenario)
    raise UsageError("simulate needs --preset or --scenario")


def simulate_replication(sc, mc, cfg: AnalysisConfig, seed: int, estimator: str = "bayes",
                         model=None) -> dict:
    """One pitfall replication: generate, thin, fit, adjust under CC and AC.

    The MCMC seed is offset by 2**32 so its streams never coincide with the
    data-generation streams of any replication.
    """
    d, _ = simulate_trial(sc, mc, seed)
    cc_set, ac_set = case_partition(d)
    means = baseline_means(d, cc_set, cfg.pooling), baseline_means(d, ac_set, cfg.pooling)
    row = {"seed": seed,
           "completion0": cc_set.counts[0] / d.arm_counts()[0],
           "completion1": cc_set.counts[1] / d.arm_counts()[1],
           "available0": ac_set.counts[0] / d.arm_counts()[0],
           "available1": ac_set.counts[1] / d.arm_counts()[1]}
    pm = [baseline_means(d, s, PER_ARM) for s in (cc_set, ac_set)]
    row["gap0"] = pm[1].u0[0] - pm[0].u0[0]
    row["gap1"] = pm[1].u0[1] - pm[0].u0[1]
    if estimator == "ols":
        spec = build_spec(cfg.model_config(model), d)
        fits = ols_fit(build_inputs(spec, d))
        coef = {**fits["e"].as_dict(), **fits["c"].as_dict()}
        de = []
        for m in means:
            mu_e, _ = adjust_coefficients(coef, m, covariates_at=cfg.covariates_at)
            de.append(float(mu_e[1] - mu_e[0]))
    else:
        mcmc = McmcSettings(**{**cfg.mcmc.__dict__, "seed": (seed + 2**32) % 2**64})
        a = analyse(d, cfg, model, mcmc, diagnostics=False)
        de = [float(np.mean(a.cc.delta_e)), float(np.mean(a.ac.delta_e))]
    row["delta_e_cc"], row["delta_e_ac"] = de
    row["flip"] = int(np.sign(de[0]) != np.sign(de[1]))
    return row


SIM_COLUMNS = ("replication", "seed", "completion0", "completion1", "available0", "available1",
               "gap0", "gap1", "delta_e_cc", "delta_e_ac", "flip")


def summarize_replications(rows) -> dict:
    arr = {k: np.array([r[k] for r in rows], dtype=float) for k in SIM_COLUMNS[2:]}
    R = len(rows)
    de_cc, de_ac = arr["delta_e_cc"], arr["delta_e_ac"]
    out = {"replications": R,
           "flip_rate": float(arr["flip"].mean()),
           "cc_negative_ac_positive": int(np.sum((de_cc < 0) & (de_ac > 0))),
           "cc_positive_ac_negative": int(np.sum((de_cc > 0) & (de_ac < 0)))}
    for k in ("completion0", "completion1", "available0", "available1", "gap0", "gap1"):
        out[f"mean_{k}"] = float(arr[k].mean())
        out[f"se_{k}"] = float(arr[k].std(ddof=1) / np.sqrt(R)) if R > 1 else None
    return out


def cmd_simulate(args) -> int:
    if args.replications is None or args.replications < 1:
        raise UsageError("--replications must be a positive integer")
    sc, mc = _scenario(args)
    run = Run(args, "simulate")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = _preset_config(args.preset)
    else:
        cfg = config_from_mapping({})
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    run.config_digest, run.seed = cfg.digest, cfg.seed
    if args.scenario:
        run.inputs[Path(args.scenario).name] = _digest(args.scenario)
    model = _model_overrides(args) or None
    rows = []
    for r in range(args.replications):
        row = simulate_replication(sc, mc, cfg, cfg.seed + r, args.estimator, model)
        rows.append({"replication": r, **row})
    with run.path("replications.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIM_COLUMNS)
        for row in rows:
            w.writerow([row[k] if isinstance(row[k], int) else repr(float(row[k]))
                        for k in SIM_COLUMNS])
    summary = summarize_replications(rows)
    summary["scenario"] = sc.name
    summary["mechanism"] = mc.kind
    summary["estimator"] = args.estimator
    _dump(run.path("simulation.json"), summary)
    print(f"{sc.name} ({mc.kind}), {summary['replications']} replications: "
          f"sign disagreement {summary['flip_rate']:.3f} "
          f"(CC<0<AC {summary['cc_negative_ac_positive']}, "
          f"CC>0>AC {summary['cc_positive_ac_negative']})")
    run.finish()
    return 0


def cmd_generate(args) -> int:
    sc, mc = _scenario(args)
    run = Run(args, "generate")
    seed = 0 if args.seed is None else args.seed
    run.seed = seed
    if args.complete:
        d, _ = generate(sc, 2 * seed)
    else:
        d, _ = simulate_trial(sc, mc, seed)
    write_dataset(d, run.path("data.csv"))
    if args.preset:
        src = resources.files("baseline_cea").joinpath("presets", f"{args.preset}.analysis.toml")
        run.path("analysis.toml").write_text(src.read_text())
    run.finish()
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="baseline-cea",
                                description="Baseline-adjusted cost-effectiveness analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, config=True):
        if data:
            sp.add_argument("--data", required=True, help="trial data (CSV)")
        if config:
            sp.add_argument("--config", help="analysis config (TOML)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", default=".", help="directory for outputs")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("describe", help="missingness report and CC/AC baseline histograms")
    common(sp)
    sp.set_defaults(func=cmd_describe)

    sp = sub.add_parser("fit", help="fit one model and report convergence")
    common(sp)
    sp.add_argument("--model", help="family.structure, e.g. joint.multilevel-slope")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("compare", help="CC versus AC adjusted means, CEP and CEAC")
    common(sp)
    sp.add_argument("--model", help="family.structure, a comma list, or 'all'")
    sp.add_argument("--convention", choices=("cc", "ac", "both"), default="both")
    sp.add_argument("--wtp-max", type=float)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("simulate", help="repeat the CC/AC comparison on synthetic trials")
    common(sp, data=False)
    sp.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    sp.add_argument("--scenario", help="scenario file (TOML)")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--model", help="family.structure")
    sp.add_argument("--estimator", choices=("bayes", "ols"), default="bayes")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("generate", help="write one synthetic dataset")
    common(sp, data=False, config=False)
    sp.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    sp.add_argument("--scenario", help="scenario file (TOML)")
    sp.add_argument("--complete", action="store_true", help="skip the missingness step")
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NUMERICAL
    except (UsageError, BaselineCEAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
