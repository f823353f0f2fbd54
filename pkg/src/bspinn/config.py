"""Run configuration: JSON loading, validation and the run manifest."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .analytic import AMER_PUT, KINDS, MarketParams
from .losses import LossWeights
from .network import INPUT_TRANSFORMS, OUTPUT_TRANSFORMS, MLPConfig
from .sampler import Domain
from .trainer import ANCHOR_MODES, TrainPlan


class ConfigError(ValueError):
    """Validation failure; message carries the offending field path."""


@dataclass
class EvalSpec:
    n_s: int = 201
    s_min: float = 0.0
    s_max: float = 0.0  # 0 means "3 K", resolved at load
    time_slices: list = field(default_factory=list)  # empty means {0, T/2, T}

    def grid(self, market: MarketParams):
        s_max = self.s_max if self.s_max > 0 else 3.0 * market.strike
        slices = self.time_slices or [0.0, market.maturity / 2, market.maturity]
        return np.linspace(self.s_min, s_max, self.n_s), list(slices)


@dataclass
class FDSpec:
    n_s: int = 800
    n_t: int = 800
    omega: float = 1.5
    tol: float = 1e-8
    max_iter: int = 10_000


@dataclass
class RunConfig:
    plan: TrainPlan
    evaluation: EvalSpec
    fd: FDSpec
    output_dir: str

    def resolved_output_dir(self):
        return os.environ.get("BSPINN_OUTPUT_DIR", self.output_dir)


def _get(d, path, default, cast=None):
    cur = d
    parts = path.split(".")
    for p in parts[:-1]:
        cur = cur.get(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"{path}: expected an object along the path")
    val = cur.get(parts[-1], default)
    if cast is not None and val is not None:
        try:
            val = cast(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return val


def from_dict(doc: dict) -> RunConfig:
    """Build and validate a RunConfig from a plain JSON-style dict.

    All defaults are embedded here so a dumped manifest is self-describing.
    """
    kind = _get(doc, "market.kind", "euro_put", str)
    if kind not in KINDS:
        raise ConfigError(f"market.kind: expected one of {KINDS}, got {kind!r}")
    try:
        market = MarketParams(
            rate=_get(doc, "market.rate", 0.05, float),
            sigma=_get(doc, "market.sigma", 0.2, float),
            strike=_get(doc, "market.strike", 45.0, float),
            maturity=_get(doc, "market.maturity", 0.5, float),
            kind=kind,
        )
    except ValueError as exc:
        raise ConfigError(f"market: {exc}") from exc

    s_min = _get(doc, "domain.s_min", 0.0, float)
    s_max = _get(doc, "domain.s_max", 3.0 * market.strike, float)
    try:
        domain = Domain(s_min, s_max, market.maturity)
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from exc

    input_transform = _get(doc, "network.input_transform", "scaled", str)
    if input_transform not in INPUT_TRANSFORMS:
        raise ConfigError(
            f"network.input_transform: expected one of {INPUT_TRANSFORMS}"
        )
    if input_transform == "log_moneyness" and s_min <= 0.0:
        raise ConfigError(
            "network.input_transform: log_moneyness needs domain.s_min > 0"
        )
    output_transform = _get(doc, "network.output_transform", "identity", str)
    if output_transform not in OUTPUT_TRANSFORMS:
        raise ConfigError(
            f"network.output_transform: expected one of {OUTPUT_TRANSFORMS}"
        )
    try:
        net = MLPConfig(
            hidden_layers=_get(doc, "network.hidden_layers", 4, int),
            hidden_width=_get(doc, "network.hidden_width", 50, int),
            input_transform=input_transform,
            output_transform=output_transform,
            strike=market.strike,
            sigma=market.sigma,
            maturity=market.maturity,
        )
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc

    try:
        weights = LossWeights(
            residual=_get(doc, "weights.residual", 1.0, float),
            terminal=_get(doc, "weights.terminal", 10.0, float),
            boundary=_get(doc, "weights.boundary", 10.0, float),
            obstacle=_get(doc, "weights.obstacle", 10.0, float),
            anchor=_get(doc, "weights.anchor", 1e-3, float),
        )
    except ValueError as exc:
        raise ConfigError(f"weights: {exc}") from exc

    anchor_mode = _get(doc, "train.anchor_mode", "shared", str)
    if anchor_mode not in ANCHOR_MODES:
        raise ConfigError(f"train.anchor_mode: expected one of {ANCHOR_MODES}")
    try:
        plan = TrainPlan(
            market=market,
            domain=domain,
            net=net,
            weights=weights,
            n_interior=_get(doc, "collocation.n_interior", 150, int),
            n_terminal=_get(doc, "collocation.n_terminal", 128, int),
            n_boundary=_get(doc, "collocation.n_boundary", 128, int),
            kink_fraction=_get(doc, "collocation.kink_fraction", 0.3, float),
            stage1_epochs=_get(doc, "train.stage1_epochs", 50_000, int),
            stage2_epochs=_get(doc, "train.stage2_epochs", 5_000, int),
            ensemble_size=_get(doc, "train.ensemble_size", 30, int),
            base_lr=_get(doc, "train.base_lr", 1e-3, float),
            decay_rate=_get(doc, "train.decay_rate", 0.96, float),
            decay_steps=_get(doc, "train.decay_steps", 1000, int),
            seed=_get(doc, "seed", 0, int),
            anchor_mode=anchor_mode,
            anchor_scale=_get(doc, "train.anchor_scale", 0.05, float),
        )
    except ValueError as exc:
        raise ConfigError(f"train/collocation: {exc}") from exc
    if plan.n_interior < 1 or plan.n_terminal < 1 or plan.n_boundary < 1:
        raise ConfigError("collocation: counts must be >= 1")

    evaluation = EvalSpec(
        n_s=_get(doc, "evaluation.n_s", 201, int),
        s_min=_get(doc, "evaluation.s_min", 0.0, float),
        s_max=_get(doc, "evaluation.s_max", 0.0, float),
        time_slices=_get(doc, "evaluation.time_slices", []) or [],
    )
    if evaluation.n_s < 2:
        raise ConfigError("evaluation.n_s: need at least 2 grid points")
    fd = FDSpec(
        n_s=_get(doc, "fd.n_s", 800, int),
        n_t=_get(doc, "fd.n_t", 800, int),
        omega=_get(doc, "fd.omega", 1.5, float),
        tol=_get(doc, "fd.tol", 1e-8, float),
        max_iter=_get(doc, "fd.max_iter", 10_000, int),
    )
    if not 1.0 < fd.omega < 2.0:
        raise ConfigError("fd.omega: relaxation factor must lie in (1, 2)")
    output_dir = _get(doc, "output_dir", "runs/default", str)
    return RunConfig(plan, evaluation, fd, output_dir)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(doc)


def to_dict(cfg: RunConfig) -> dict:
    plan = cfg.plan
    m = plan.market
    return {
        "market": {
            "rate": m.rate,
            "sigma": m.sigma,
            "strike": m.strike,
            "maturity": m.maturity,
            "kind": m.kind,
        },
        "domain": {"s_min": plan.domain.s_min, "s_max": plan.domain.s_max},
        "network": {
            "hidden_layers": plan.net.hidden_layers,
            "hidden_width": plan.net.hidden_width,
            "input_transform": plan.net.input_transform,
            "output_transform": plan.net.output_transform,
        },
        "weights": {
            "residual": plan.weights.residual,
            "terminal": plan.weights.terminal,
            "boundary": plan.weights.boundary,
            "obstacle": plan.weights.obstacle,
            "anchor": plan.weights.anchor,
        },
        "collocation": {
            "n_interior": plan.n_interior,
            "n_terminal": plan.n_terminal,
            "n_boundary": plan.n_boundary,
            "kink_fraction": plan.kink_fraction,
        },
        "train": {
            "stage1_epochs": plan.stage1_epochs,
            "stage2_epochs": plan.stage2_epochs,
            "ensemble_size": plan.ensemble_size,
            "base_lr": plan.base_lr,
            "decay_rate": plan.decay_rate,
            "decay_steps": plan.decay_steps,
            "anchor_mode": plan.anchor_mode,
            "anchor_scale": plan.anchor_scale,
        },
        "seed": plan.seed,
        "evaluation": {
            "n_s": cfg.evaluation.n_s,
            "s_min": cfg.evaluation.s_min,
            "s_max": cfg.evaluation.s_max,
            "time_slices": cfg.evaluation.time_slices,
        },
        "fd": {
            "n_s": cfg.fd.n_s,
            "n_t": cfg.fd.n_t,
            "omega": cfg.fd.omega,
            "tol": cfg.fd.tol,
            "max_iter": cfg.fd.max_iter,
        },
        "output_dir": cfg.output_dir,
    }


def manifest(cfg: RunConfig) -> dict:
    doc = to_dict(cfg)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    plan = cfg.plan
    return {
        "config": doc,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "derived_seeds": {
            "init": plan.init_seed,
            "collocation": plan.colloc_seed,
            "members": [plan.member_seed(m) for m in range(plan.ensemble_size)],
        },
    }


def write_manifest(path, cfg: RunConfig) -> None:
    with open(path, "w") as fh:
        json.dump(manifest(cfg), fh, indent=2)
        fh.write("\n")
