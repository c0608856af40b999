"""Command-line interface: ``uncervals <subcommand> [options]``.

Every run writes ``manifest.json`` (or ``--manifest``) recording the resolved
options, so ``uncervals replay manifest.json`` reproduces the run. Options may
also come from a JSON or TOML file given by ``--config``; flags win.

Exit codes: 0 success, 2 usage, 3 I/O, 4 numeric or invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import calibrate, prediction_bounds
from .core import (
    DatasetError,
    DatasetParseError,
    derive_seed,
    load_dataset,
    make_split,
    rng_stream,
    save_dataset,
)
from .estimators import FEATURES, OracleModel, WeibullPhError, fit_estimator, model_from_dict
from .estimators.turnbull import TurnbullError
from .evaluate import (
    Method,
    compare_conditional_coverage,
    conditional_coverage_curve,
    gof_uniformity,
    marginal_coverage,
    method_bounds,
    vc_shatter_search,
)
from .simgen import Link, SimConfig, preset, simulate

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _plain(obj):
    """JSON-safe copy: numpy to python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def _dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _write_text(path, text: str):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if v == math.inf else repr(v)
    return v


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_config(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        cfg = tomllib.loads(raw.decode())
    else:
        cfg = json.loads(raw)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a table of options")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _sim_config(args) -> SimConfig:
    base = preset(args.preset) if args.preset else SimConfig()
    changes = {}
    for key in ("shape", "scale", "inspections", "inspect_length", "n", "rho"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    if args.covariates is not None:
        changes["n_covariates"] = args.covariates
    if args.cov_low is not None:
        changes["covariate_low"] = args.cov_low
    if args.cov_high is not None:
        changes["covariate_high"] = args.cov_high
    if args.link is not None or args.coef is not None:
        kind = args.link or base.link.kind
        coef = base.link.coef if args.coef is None else tuple(float(c) for c in str(args.coef).split(","))
        changes["link"] = Link(kind, coef)
    return base.replace(**changes)


def _t_max_for(data) -> float:
    ends = np.concatenate([data.l, data.u[np.isfinite(data.u)]])
    return 10.0 * float(ends.max()) if ends.size and ends.max() > 0 else 1.0


def _read_covariates(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetParseError("empty covariate file")
    header = [h.strip() for h in rows[0]]
    cols = [i for i, h in enumerate(header) if h.startswith("x")]
    X = np.empty((len(rows) - 1, len(cols)))
    for r, row in enumerate(rows[1:], start=1):
        try:
            X[r - 1] = [float(row[i]) for i in cols]
        except (ValueError, IndexError):
            raise DatasetParseError(f"malformed covariate row {row!r}", row=r) from None
    if not np.all(np.isfinite(X)):
        raise DatasetError("covariates must be finite")
    return X


# ---------------------------------------------------------------------------
# subcommands; each returns {"outputs": [...], "summary": {...}}


def cmd_simulate(args):
    cfg = _sim_config(args).replace(seed=derive_seed(args.seed, "sim"))
    sim = simulate(cfg)
    save_dataset(sim.dataset, args.out)
    times = args.times_out or str(Path(args.out).with_suffix("")) + ".times.csv"
    _write_csv(times, ["t"], ([t] for t in sim.true_times))
    summary = {
        "config": cfg.to_dict(),
        "n": len(sim.dataset),
        "right_censored": float(np.mean(sim.right_censored)) if len(sim.dataset) else 0.0,
        "left_censored": float(np.mean(sim.left_censored)) if len(sim.dataset) else 0.0,
    }
    return {"outputs": [args.out, times], "summary": summary}


def _fit_model(args, part):
    if args.model == "oracle":
        return OracleModel.from_config(_sim_config(args), t_max=_t_max_for(part))
    opts = {}
    if args.tol is not None:
        opts["tol"] = args.tol
    if args.max_iter is not None:
        opts["max_iter"] = args.max_iter
    if args.model == "weibph":
        opts["features"] = args.features
    if args.model == "kturnbull" and args.bandwidth is not None:
        opts["bandwidth"] = args.bandwidth
    return fit_estimator(args.model, part, **opts)


def cmd_fit(args):
    data = load_dataset(args.data)
    split = make_split(len(data), args.split_frac, derive_seed(args.seed, "split"))
    part = data.subset(split.fit_indices)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = _fit_model(args, part)
    doc = {
        "model": model.to_dict(),
        "split": {
            "master_seed": args.seed,
            "seed": split.seed,
            "fraction": split.fit_fraction,
            "n_total": len(data),
            "n_fit": int(split.fit_indices.size),
        },
        "t_max": _t_max_for(part),
        "warnings": sorted({str(w.message) for w in caught}),
    }
    _write_text(args.out, _dumps(doc))
    return {"outputs": [args.out], "summary": {"model": args.model, "n_fit": doc["split"]["n_fit"]}}


def _model_doc(path):
    doc = _read_json(path)
    if "model" not in doc or not isinstance(doc["model"], dict):
        raise UsageError(f"{path} is not a fitted-model file")
    return doc, model_from_dict(doc["model"])


def cmd_calibrate(args):
    data = load_dataset(args.data)
    doc, model = _model_doc(args.model)
    split_info = doc.get("split", {})
    if split_info and (split_info.get("master_seed") != args.seed
                       or split_info.get("fraction") != args.split_frac
                       or split_info.get("n_total") != len(data)):
        raise UsageError("seed, --split-frac and data must match those used by `fit`")
    split = make_split(len(data), args.split_frac, derive_seed(args.seed, "split"))
    cal_part = data.subset(split.calibration_indices)
    t_max = float(doc.get("t_max", _t_max_for(data.subset(split.fit_indices))))
    res = calibrate(model, cal_part, args.alpha, args.b, args.mode, rng_stream(args.seed, "boot"), t_max)
    res.seed = int(args.seed)
    out = res.to_dict()
    out["split"] = {"seed": split.seed, "fraction": split.fit_fraction, "n_calibration": res.n}
    _write_text(args.out, _dumps(out))
    return {"outputs": [args.out], "summary": {"q_hat": res.q_hat, "n": res.n, "mode": res.mode}}


def cmd_predict(args):
    _, model = _model_doc(args.model)
    cal = _read_json(args.calibration)
    q_hat, b = float(cal["q_hat"]), float(cal["b"])
    t_max = float(cal.get("t_max", math.inf))
    X = _read_covariates(args.x)
    lo, hi = prediction_bounds(model, X, q_hat, b, t_max)
    xcols = [f"x{j + 1}" for j in range(X.shape[1])]
    if b == 1.0:
        _write_csv(args.out, xcols + ["lpb"], (list(x) + [a] for x, a in zip(X, lo)))
    else:
        _write_csv(args.out, xcols + ["lo", "hi"], (list(x) + [a, c] for x, a, c in zip(X, lo, hi)))
    return {"outputs": [args.out], "summary": {"rows": int(X.shape[0]), "b": b}}


def _report_paths(args, name):
    out = Path(args.out)
    return out / f"{name}.json", out / f"{name}.csv"


def cmd_coverage(args):
    cfg = _sim_config(args)
    method = Method(args.method, args.mode, args.b, args.estimator, args.features, args.split_frac)
    rep = marginal_coverage(method, cfg, args.alpha, args.B, args.n_test, args.seed, args.threads)
    doc = rep.to_dict()
    doc["config"] = cfg.to_dict()
    jpath, cpath = _report_paths(args, "coverage")
    _write_text(jpath, _dumps(doc))
    _write_csv(cpath, ["replication", "coverage"], enumerate(rep.coverages))
    summary = {k: doc[k] for k in ("label", "alpha", "B", "mean", "sd", "se", "mean_abs_deviation")}
    return {"outputs": [str(jpath), str(cpath)], "summary": summary}


def cmd_condcov(args):
    cfg = _sim_config(args)
    methods = [
        Method("uncervals", args.mode, 1.0, args.estimator, args.features, args.split_frac),
        Method("naive", args.mode, 1.0, args.estimator, args.features, args.split_frac),
    ]
    errs = compare_conditional_coverage(methods, cfg, args.alpha, args.B, args.n_eval, args.seed,
                                        args.threads)
    # curves of the first replication, for plotting
    train = simulate(cfg.replace(seed=derive_seed(args.seed, "sim", 0)))
    fresh = simulate(cfg.replace(n=args.n_eval, seed=derive_seed(args.seed, "eval", 0)))
    curves = {}
    for m in methods:
        fn = method_bounds(m, train.dataset, cfg, args.alpha, derive_seed(args.seed, "rep", 0))
        curves[m.label] = conditional_coverage_curve(lambda X: fn(X)[0], cfg, args.alpha,
                                                     args.n_eval, sim=fresh)
    labels = [m.label for m in methods]
    means = {k: float(np.mean(v)) for k, v in errs.items()}
    doc = {
        "alpha": args.alpha,
        "B": args.B,
        "n": cfg.n,
        "n_eval": args.n_eval,
        "seed": args.seed,
        "config": cfg.to_dict(),
        "err": {k: v.tolist() for k, v in errs.items()},
        "mean_err": means,
        "sd_err": {k: float(np.std(v, ddof=1)) if v.size > 1 else 0.0 for k, v in errs.items()},
        "ratio": means[labels[0]] / means[labels[1]] if means[labels[1]] > 0 else math.inf,
        "curves": {k: c.to_dict() for k, c in curves.items()},
    }
    jpath, cpath = _report_paths(args, "condcov")
    _write_text(jpath, _dumps(doc))
    c0 = curves[labels[0]]
    if c0.grid.ndim == 1:
        rows = zip(c0.grid, *(curves[k].pi_grid for k in labels))
        _write_csv(cpath, ["x"] + [f"pi:{k}" for k in labels], rows)
    else:
        _write_csv(cpath, ["replication"] + [f"err:{k}" for k in labels],
                   ([r] + [errs[k][r] for k in labels] for r in range(args.B)))
    return {"outputs": [str(jpath), str(cpath)], "summary": {"mean_err": means, "ratio": doc["ratio"]}}


def cmd_gof(args):
    data = load_dataset(args.data)
    doc, model = _model_doc(args.model)
    split_info = doc.get("split")
    if split_info and not args.all_rows:
        split = make_split(len(data), split_info["fraction"], split_info["seed"])
        data = data.subset(split.calibration_indices)
    rep = gof_uniformity(model, data, derive_seed(args.seed, "gof"))
    out = rep.to_dict()
    out["seed"] = args.seed
    out["reject_5pct"] = rep.p_value < 0.05
    jpath, cpath = _report_paths(args, "gof")
    _write_text(jpath, _dumps(out))
    x, y = rep.ecdf()
    _write_csv(cpath, ["phi", "ecdf"], zip(x, y))
    return {"outputs": [str(jpath), str(cpath)],
            "summary": {"statistic": rep.statistic, "p_value": rep.p_value, "n": rep.n}}


def cmd_vccheck(args):
    rep = vc_shatter_search(args.budget, args.seed, args.points)
    jpath, cpath = _report_paths(args, "vccheck")
    doc = rep.to_dict()
    doc["result"] = "shattering found" if rep.shattered else "no shattering found"
    _write_text(jpath, _dumps(doc))
    w = rep.witness
    _write_csv(cpath, ["point", "l", "u", "c"],
               ([j + 1, w["l"][j], w["u"][j], w["c"][j]] for j in range(len(w.get("l", [])))))
    return {"outputs": [str(jpath), str(cpath)],
            "summary": {"max_dichotomies": rep.max_dichotomies, "shattered": rep.shattered}}


# ---------------------------------------------------------------------------
# parser


def _add_sim(p, default_preset=None):
    g = p.add_argument_group("simulation")
    g.add_argument("--preset", default=default_preset,
                   choices=["condcov", "cfs", "linear_ph", "nonlinear_ph", "no_covariates", "oracle"])
    g.add_argument("--n", type=int)
    g.add_argument("--shape", type=float)
    g.add_argument("--scale", type=float)
    g.add_argument("--inspections", type=int)
    g.add_argument("--inspect-length", type=float)
    g.add_argument("--covariates", type=int, help="number of covariates")
    g.add_argument("--cov-low", type=float)
    g.add_argument("--cov-high", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--link", choices=list(Link._KINDS))
    g.add_argument("--coef", help="comma-separated link coefficients")


def _add_common(p):
    p.add_argument("--config", help="JSON or TOML file of options (flags override)")
    p.add_argument("--manifest", help="manifest path (default: manifest.json beside the output)")
    p.add_argument("--format", choices=["json", "csv"], default="json", help="stdout summary format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uncervals", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", help="simulate an interval-censored dataset")
    _add_common(p)
    _add_sim(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--times-out", help="sidecar CSV of true event times")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a conditional CDF on the fitting split")
    _add_common(p)
    _add_sim(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["turnbull", "weibph", "oracle", "kturnbull"], default="weibph")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--features", choices=sorted(FEATURES), default="identity")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--split-frac", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="conformal calibration on the second split")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="fitted-model JSON from `fit`")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--mode", choices=["e0", "estar"], default="estar")
    p.add_argument("--split-frac", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="prediction sets for new covariates")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--x", required=True, help="CSV with columns x1..xp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("coverage", help="Monte Carlo marginal coverage")
    _add_common(p)
    _add_sim(p, "condcov")
    p.add_argument("--method", choices=["uncervals", "naive"], default="uncervals")
    p.add_argument("--mode", choices=["e0", "estar"], default="estar")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--estimator", choices=["oracle", "weibph", "turnbull", "kturnbull"], default="weibph")
    p.add_argument("--features", choices=sorted(FEATURES), default="identity")
    p.add_argument("--split-frac", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("condcov", help="conditional coverage err: uncervals vs naive quantile")
    _add_common(p)
    _add_sim(p, "condcov")
    p.add_argument("--mode", choices=["e0", "estar"], default="estar")
    p.add_argument("--estimator", choices=["oracle", "weibph", "turnbull", "kturnbull"], default="weibph")
    p.add_argument("--features", choices=sorted(FEATURES), default="identity")
    p.add_argument("--split-frac", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--B", type=int, default=1)
    p.add_argument("--n-eval", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_condcov)

    p = sub.add_parser("gof", help="goodness of fit via uniformity of randomized scores")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--all-rows", action="store_true", help="test every row, not only the calibration split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("vccheck", help="randomized search for shattered point sets")
    _add_common(p)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--points", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_vccheck)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--check", action="store_true", help="fail unless outputs hash identically")
    p.set_defaults(func=None)
    return parser


_NON_OPTIONS = {"func", "command", "config", "manifest", "format"}


def _prescan(argv):
    """Subcommand and ``--config`` value, found before full parsing."""
    command = next((a for a in argv if not a.startswith("-")), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _prescan(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    cfg = {}
    if config and command in subparsers and command != "replay":
        cfg = _load_config(config)
        subparser = subparsers[command]
        known = {a.dest for a in subparser._actions} - _NON_OPTIONS
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        subparser.set_defaults(**cfg)
        # required flags may be satisfied by the config file
        for action in subparser._actions:
            if action.dest in cfg:
                action.required = False
    return parser.parse_args(argv), cfg


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_OPTIONS}


def _to_argv(command: str, options: dict) -> list[str]:
    argv = [command]
    for k, v in options.items():
        if v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-") if k != "B" else "--B"
        argv.append(flag)
        if v is not True:
            argv.append(str(v))
    return argv


def _primary_dir(args) -> Path:
    out = Path(args.out)
    return out if args.command in ("coverage", "condcov", "gof", "vccheck") else out.parent


def _execute(args, config_values):
    result = args.func(args)
    manifest = Path(args.manifest) if args.manifest else _primary_dir(args) / "manifest.json"
    doc = {
        "command": args.command,
        "version": __version__,
        "config_file": args.config,
        "config_values": config_values,
        "options": _resolved(args),
        "argv": _to_argv(args.command, _resolved(args)),
        "outputs": {str(p): _sha256(p) for p in result["outputs"]},
        "summary": result["summary"],
    }
    _write_text(manifest, _dumps(doc))
    return result, doc


def _emit(summary, fmt):
    flat = _plain(summary)
    if fmt == "json":
        sys.stdout.write(json.dumps(flat, sort_keys=True) + "\n")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["key", "value"])
        for k in sorted(flat):
            w.writerow([k, json.dumps(flat[k], sort_keys=True) if isinstance(flat[k], (dict, list)) else flat[k]])


def _replay(parser, args):
    doc = _read_json(args.manifest)
    if "argv" not in doc:
        raise UsageError(f"{args.manifest} is not a manifest")
    sub_args = parser.parse_args(doc["argv"])
    sub_args.manifest = args.manifest if not args.check else None
    expected = doc.get("outputs", {})
    result, new = _execute(sub_args, doc.get("config_values", {}))
    if args.check and new["outputs"] != expected:
        diff = sorted(k for k in set(expected) | set(new["outputs"])
                      if expected.get(k) != new["outputs"].get(k))
        raise ReplayMismatch(f"outputs differ from manifest: {', '.join(diff)}")
    return result


class ReplayMismatch(Exception):
    pass


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code},
                                sort_keys=True) + "\n")
    return code


def run(argv=None) -> int:
    """Run the CLI on ``argv``; returns the process exit code."""
    parser = build_parser()
    try:
        args, cfg = _parse(parser, argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except (OSError, ValueError) as e:  # unreadable or malformed config file
        return _fail(EXIT_IO if isinstance(e, OSError) else EXIT_USAGE, e)
    try:
        if args.command == "replay":
            result = _replay(parser, args)
            fmt = "json"
        else:
            result, _ = _execute(args, cfg)
            fmt = args.format
        _emit(result["summary"], fmt)
        return 0
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except (DatasetParseError, OSError, json.JSONDecodeError) as e:
        return _fail(EXIT_IO, e)
    except (DatasetError, WeibullPhError, TurnbullError, ReplayMismatch, ValueError, KeyError,
            FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as e:
        return _fail(EXIT_NUMERIC, e)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
