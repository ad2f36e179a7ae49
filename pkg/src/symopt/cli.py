"""Command line: ``symopt verify | train | converge``.

Exit status is 0 when every gating check passes, 1 when an invariant fails
and 2 for configuration or input errors.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .config import ConfigError, _int, build_train, load_config, parse_config_text
from .errors import SymoptError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_checks(path, checks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "detail", "value", "threshold", "status"])
        for c in checks:
            w.writerow([c.name, c.detail, _fmt(c.value), _fmt(c.threshold), c.status])


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc.strerror}", None, path) from exc


def _config(path):
    return load_config(path) if path else parse_config_text("", "<defaults>")


def cmd_verify(suite="all", config=None, output="out", seed=None, out=None):
    out = out or sys.stdout
    from . import suites
    cfg = _config(config)
    sec = cfg.section("verify")
    trials = sec.get("trials", _int, 100)
    polar_samples = sec.get("polar_samples", _int, 500)
    inv_samples = sec.get("inv_sqrt_samples", _int, 50)
    cfg_seed = sec.get("seed", _int, 0)
    sec.check_unused()
    seed = seed if seed is not None else cfg_seed
    names = list(suites.SUITES) if suite == "all" else [suite]
    if any(n not in suites.SUITES for n in names):
        raise ConfigError(f"unknown suite {suite!r}; choose from "
                          f"{', '.join(list(suites.SUITES) + ['all'])}")
    _ensure_dir(output)
    failed = False
    for name in names:
        if name == "oracles":
            checks = suites.oracle_suite(polar_samples, inv_samples, seed)
        elif name == "equivariance":
            checks = suites.equivariance_suite(trials, seed)
        else:
            checks = suites.convergence_suite(seed=seed)
        path = os.path.join(output, f"{name}_residuals.csv")
        _write_checks(path, checks)
        bad = [c for c in checks if c.failed]
        failed = failed or bool(bad)
        worst = max((c.value for c in checks if c.status != "info"), default=0.0)
        print(f"{name}: {len(checks) - len(bad)}/{len(checks)} ok, worst gated value "
              f"{worst!r} -> {path}", file=out)
        for c in bad:
            print(f"  FAIL {c.name} {c.detail}: {c.value!r} vs {c.threshold!r}", file=out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_train(config, output=None, seed=None, resume=None, out=None):
    out = out or sys.stdout
    from .bench.toy import toy_train, write_diagnostics_json, write_log_csv
    cfg = load_config(config)
    model, run = build_train(cfg, seed=seed, output_dir=output, resume=resume)
    _ensure_dir(run.output_dir)
    result = toy_train(model, run)
    csv_path = os.path.join(run.output_dir, "train_log.csv")
    json_path = os.path.join(run.output_dir, "diagnostics.json")
    try:
        write_log_csv(csv_path, result)
        write_diagnostics_json(json_path, result, {"seed": run.seed,
                                                   "total_steps": run.total_steps,
                                                   "experts": model.experts})
    except OSError as exc:
        raise ConfigError(f"cannot write run artifacts: {exc.strerror}", None,
                          exc.filename) from exc
    train = [r for r in result.rows if r["split"] == "train"]
    if train:
        print(f"train: {len(train)} steps, loss {train[0]['loss']!r} -> {train[-1]['loss']!r}; "
              f"log {csv_path}", file=out)
    return EXIT_OK


def cmd_converge(config, output=None, seed=None, out=None):
    out = out or sys.stdout
    from .bench.synthetic import (SyntheticLoss, TrialSpec, calibrate_gamma,
                                  run_convergence_trial, write_trace_csv)
    cfg = load_config(config)
    sec = cfg.section("converge", required=True)
    run = cfg.section("run")
    cfg_seed, cfg_out = run.get("seed", _int, 0), run.get("output_dir", str, "out")
    run.check_unused()
    seed = seed if seed is not None else cfg_seed
    output = output or cfg_out
    kind = sec.get("loss", str, "QuadraticAniso").strip()
    m, n = sec.get("m", _int, 8), sec.get("n", _int, 6)
    L, mu = sec.get("L", float, 10.0), sec.get("mu", float, 1.0)
    rank = sec.get("rank", _int, 0)
    rng = np.random.default_rng([seed, 11])
    W_star = rng.standard_normal((m, n))
    if kind == "QuadraticFro":
        loss = sec.build("loss", lambda: SyntheticLoss.quadratic_fro(W_star, L))
    elif kind == "QuadraticAniso":
        loss = sec.build("loss", lambda: SyntheticLoss.aniso_with_spectrum(W_star, L, mu,
                                                                            [seed, 12]))
    elif kind == "LowRankFactor":
        r = rank or max(1, min(m, n) // 2)
        X = rng.standard_normal((2 * m, r)) @ rng.standard_normal((r, m))
        loss = sec.build("loss", lambda: SyntheticLoss.low_rank_factor(
            X, rng.standard_normal((2 * m, n))))
    else:
        raise sec._err("loss", f"unknown loss kind {kind!r}")
    spec = sec.build("family", lambda: TrialSpec(
        sec.get("family", str, "spectral_identity").strip(), eps=sec.get("eps", float, 1e-8),
        lo=sec.get("lo", float, 0.5), hi=sec.get("hi", float, 1.0)))
    steps = sec.get("steps", _int, 1000)
    gamma_raw = sec.get("gamma", str, "auto").strip()
    scale = sec.get("gamma_scale", float, 0.5)
    expect = sec.get("expect", str, "pass").strip()
    if expect not in ("pass", "violations"):
        raise sec._err("expect", "must be pass or violations")
    sec.check_unused()
    if rank and kind != "LowRankFactor":
        offset = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    else:
        offset = rng.standard_normal((m, n))
    W0 = (loss.W_star if loss.W_star is not None else np.zeros(loss.shape)) + offset
    if gamma_raw == "auto":
        _, cal = calibrate_gamma(loss, spec, W0, steps)
        gamma = scale * cal.gamma_max
    else:
        gamma = sec.build("gamma", lambda: float(gamma_raw))
    rep = sec.build("gamma", lambda: run_convergence_trial(loss, spec, gamma, steps, W0))
    _ensure_dir(output)
    trace = os.path.join(output, "converge_trace.csv")
    write_trace_csv(trace, rep)
    summary = rep.summary()
    with open(os.path.join(output, "converge_summary.txt"), "w") as fh:
        fh.write(summary + "\n")
    print(summary, file=out)
    ok = rep.violations == 0 if expect == "pass" else rep.violations > 0
    return EXIT_OK if ok else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="symopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run property suites and write residual CSVs")
    v.add_argument("--suite", default="all",
                   choices=["equivariance", "convergence", "oracles", "all"])
    t = sub.add_parser("train", help="toy training run")
    t.add_argument("--resume", help="checkpoint file to continue from")
    c = sub.add_parser("converge", help="synthetic-loss convergence trial")
    for sp in (v, t, c):
        sp.add_argument("--config", required=sp is not v)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.config, args.output or "out", args.seed)
        if args.command == "train":
            return cmd_train(args.config, args.output, args.seed, args.resume)
        return cmd_converge(args.config, args.output, args.seed)
    except SymoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
