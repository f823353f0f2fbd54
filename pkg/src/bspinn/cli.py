"""Command-line driver: oracle/fd reference surfaces, two-stage training,
ensemble prediction, evaluation and kernel benchmarking.

Exit codes: 0 success, 1 configuration/validation error, 2 numerical
failure (divergence, non-convergence).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from .analytic import AMER_PUT, MarketParams, bs_price, payoff
from .config import ConfigError, RunConfig, load_config, write_manifest
from .fd import ConvergenceError, crank_nicolson, psor_american_put
from .metrics import bands, ensemble_stats, metrics
from .network import MLP, load_checkpoint, save_checkpoint
from .trainer import TrainingError, run_ensemble, train_stage1, write_training_log

CSV_VERSION = "# bspinn csv v1"


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"{CSV_VERSION}\n{header}\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def read_csv(path):
    """Returns (column names, dict of float columns)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    names = lines[0].split(",")
    cols = {n: [] for n in names}
    for ln in lines[1:]:
        for n, v in zip(names, ln.split(",")):
            cols[n].append(float(v) if v else float("nan"))
    return names, {n: np.asarray(v) for n, v in cols.items()}


def member_predictions(nets, S, t, market: MarketParams) -> np.ndarray:
    """(M, n) member values; American puts are projected onto the payoff."""
    vals = np.stack([net.forward(S, t, market) for net in nets])
    if market.kind == AMER_PUT:
        vals = np.maximum(vals, payoff(market.kind, S, market.strike))
    return vals


def reference_surface(cfg: RunConfig, S, slices):
    """Oracle values on the evaluation grid: analytic for European kinds,
    PSOR finite differences for the American put."""
    market = cfg.plan.market
    if market.kind == AMER_PUT:
        grid, _ = psor_american_put(
            market,
            s_max=max(cfg.plan.domain.s_max, float(np.max(S))),
            n_s=cfg.fd.n_s,
            n_t=cfg.fd.n_t,
            omega=cfg.fd.omega,
            tol=cfg.fd.tol,
            max_iter=cfg.fd.max_iter,
        )
        return {t: grid.at(S, np.full_like(S, t)) for t in slices}
    return {t: bs_price(market, S, np.full_like(S, t)) for t in slices}


def _run_dir(cfg: RunConfig):
    out = cfg.resolved_output_dir()
    os.makedirs(out, exist_ok=True)
    return out


def cmd_oracle(cfg: RunConfig, args) -> int:
    S, slices = cfg.evaluation.grid(cfg.plan.market)
    surface = reference_surface(cfg, S, slices)
    out = _run_dir(cfg)
    path = os.path.join(out, "oracle.csv")
    rows = [(float(s), float(t), float(v)) for t in slices for s, v in zip(S, surface[t])]
    write_csv(path, "S,t,value", rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_fd(cfg: RunConfig, args) -> int:
    market = cfg.plan.market
    s_max = cfg.plan.domain.s_max
    if market.kind == AMER_PUT:
        grid, iters = psor_american_put(
            market, s_max, cfg.fd.n_s, cfg.fd.n_t, cfg.fd.omega, cfg.fd.tol, cfg.fd.max_iter
        )
        print(f"PSOR sweeps per step: mean {iters.mean():.1f}, max {iters.max()}")
    else:
        grid = crank_nicolson(market, s_max, cfg.fd.n_s, cfg.fd.n_t)
    out = _run_dir(cfg)
    path = os.path.join(out, "fd.csv")
    grid.to_csv(path)
    print(f"wrote {path}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    out = _run_dir(cfg)
    write_manifest(os.path.join(out, "manifest.json"), cfg)
    theta1, log = train_stage1(cfg.plan)
    net = MLP.unflatten(cfg.plan.net, theta1)
    ckpt = os.path.join(out, "stage1.bspn")
    save_checkpoint(ckpt, net)
    write_training_log(os.path.join(out, "stage1_log.csv"), log)
    print(f"wrote {ckpt}; final loss {log[-1].total:.6g}")
    return 0


def cmd_ensemble(cfg: RunConfig, args) -> int:
    out = _run_dir(cfg)
    ckpt = args.stage1 or os.path.join(out, "stage1.bspn")
    if not os.path.exists(ckpt):
        raise ConfigError(f"stage-1 checkpoint {ckpt} not found (run `train` first)")
    if cfg.plan.ensemble_size < 2:
        raise ConfigError("train.ensemble_size: need at least 2 members for bands")
    theta1 = np.ascontiguousarray(load_checkpoint(ckpt).flatten())
    write_manifest(os.path.join(out, "manifest.json"), cfg)
    thetas, logs = run_ensemble(cfg.plan, theta1)
    nets = []
    for m, (theta, log) in enumerate(zip(thetas, logs)):
        net = MLP.unflatten(cfg.plan.net, theta)
        save_checkpoint(os.path.join(out, f"member_{m}.bspn"), net)
        write_training_log(os.path.join(out, f"member_{m}_log.csv"), log)
        nets.append(net)

    market = cfg.plan.market
    S, slices = cfg.evaluation.grid(market)
    rows = []
    for t in slices:
        tvec = np.full_like(S, t)
        vals = member_predictions(nets, S, tvec, market)
        ens = ensemble_stats(S, tvec, vals)
        floor = payoff(market.kind, S, market.strike) if market.kind == AMER_PUT else None
        lo, hi = bands(ens, 2, floor)
        rows += [
            (float(s), float(t), float(mu), float(sg), float(l), float(h))
            for s, mu, sg, l, h in zip(S, ens.mean, ens.std, lo, hi)
        ]
    path = os.path.join(out, "ensemble.csv")
    write_csv(path, "S,t,mu,sigma,lower_k2,upper_k2", rows)
    print(f"wrote {path} and {len(nets)} member checkpoints")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    _, pred = read_csv(args.prediction)
    _, ref = read_csv(args.reference)
    if pred["S"].shape != ref["S"].shape or not (
        np.allclose(pred["S"], ref["S"]) and np.allclose(pred["t"], ref["t"])
    ):
        raise ConfigError("prediction and reference grids do not match")
    y = ref["value"]
    y_hat = pred["mu"] if "mu" in pred else pred["value"]
    sigma = pred.get("sigma", np.zeros_like(y))

    reports = [metrics(y, y_hat, slice_label="all")]
    for t in sorted(set(np.round(pred["t"], 12))):
        mask = np.round(pred["t"], 12) == t
        reports.append(metrics(y[mask], y_hat[mask], slice_label=f"t={t:g}"))

    out = _run_dir(cfg)
    err_path = os.path.join(out, "signed_error.csv")
    write_csv(
        err_path,
        "S,t,error,sigma",
        [
            (float(s), float(t), float(e), float(sg))
            for s, t, e, sg in zip(pred["S"], pred["t"], y_hat - y, sigma)
        ],
    )
    report_path = os.path.join(out, "metrics.json")
    with open(report_path, "w") as fh:
        fh.write("[\n" + ",\n".join(r.to_json() for r in reports) + "\n]\n")
    for r in reports:
        print(
            f"{r.slice_label}: MAE={r.mae:.4g} RMSE={r.rmse:.4g} EV={r.ev:.6g} "
            f"rel%={r.relative_error_percent:.4g} (excluded zero targets: {r.n_excluded_zero_targets})"
        )
    print(f"wrote {err_path} and {report_path}")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    out = cfg.resolved_output_dir()
    market = cfg.plan.market
    nets = []
    for m in range(cfg.plan.ensemble_size):
        path = os.path.join(out, f"member_{m}.bspn")
        if not os.path.exists(path):
            break
        nets.append(load_checkpoint(path))
    if len(nets) < 2:
        raise ConfigError(f"need at least 2 member checkpoints under {out}")
    S = np.asarray([args.spot])
    t = np.asarray([args.time])
    vals = member_predictions(nets, S, t, market)
    ens = ensemble_stats(S, t, vals)
    floor = payoff(market.kind, S, market.strike) if market.kind == AMER_PUT else None
    lo, hi = bands(ens, 2, floor)
    doc = {
        "spot": args.spot,
        "time": args.time,
        "price": float(ens.mean[0]),
        "sigma": float(ens.std[0]),
        "lower_k2": float(lo[0]),
        "upper_k2": float(hi[0]),
        "members": len(nets),
    }
    print(json.dumps(doc, indent=2))
    return 0


def _bench_current(cfg: RunConfig, epochs: int):
    from . import kernels
    from .losses import LossWeights, TrainingData, loss_and_grad
    from .sampler import sample

    plan = cfg.plan
    colloc = sample(
        plan.market, plan.domain, plan.n_interior, plan.n_terminal, plan.n_boundary,
        plan.kink_fraction, plan.colloc_seed,
    )
    data = TrainingData(plan.net, plan.market, colloc)
    net = MLP.init(plan.net, plan.init_seed)
    flat = np.ascontiguousarray(net.flatten())
    loss_and_grad(flat, data, plan.weights)  # warm-up / compile
    t0 = time.perf_counter()
    for _ in range(epochs):
        loss_and_grad(flat, data, plan.weights)
    per_epoch = (time.perf_counter() - t0) / epochs
    return ("numba" if kernels.NUMBA_ENABLED else "numpy"), per_epoch


def cmd_bench(cfg: RunConfig, args) -> int:
    path, per_epoch = _bench_current(cfg, args.epochs)
    print(f"{path}: {per_epoch * 1e3:.3f} ms/epoch")
    if args.compare:
        env = dict(os.environ)
        env["BSPINN_NUMBA"] = "0" if path == "numba" else "1"
        cmd = [sys.executable, "-m", "bspinn.cli", "bench", "--config", args.config,
               "--epochs", str(args.epochs)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
        sys.stdout.write(proc.stdout)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return proc.returncode
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bspinn")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.set_defaults(func=func)
        return p

    add("oracle", cmd_oracle, "reference values on the evaluation grid")
    add("fd", cmd_fd, "full finite-difference surface")
    add("train", cmd_train, "stage-1 training run")
    p = add("ensemble", cmd_ensemble, "stage-2 anchored ensemble")
    p.add_argument("--stage1", help="stage-1 checkpoint (default <output_dir>/stage1.bspn)")
    p = add("evaluate", cmd_evaluate, "metrics of a prediction CSV vs a reference CSV")
    p.add_argument("--prediction", required=True)
    p.add_argument("--reference", required=True)
    p = add("predict", cmd_predict, "single-point price with uncertainty band")
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--time", type=float, default=0.0)
    p = add("bench", cmd_bench, "time the training kernels")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--compare", action="store_true",
                   help="also time the other kernel path in a subprocess")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command in ("train", "ensemble") and cfg.plan.net.output_transform != "identity":
            raise ConfigError(
                "network.output_transform: training requires identity "
                "(bounded_logit is an inference/label mapping)"
            )
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
