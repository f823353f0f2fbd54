"""Adam optimization, the two-stage anchored fine-tuning procedure, and
ensemble orchestration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analytic import MarketParams
from .losses import LossBreakdown, LossWeights, TrainingData, loss_and_grad
from .network import MLP, MLPConfig
from .sampler import Domain, sample

ANCHOR_MODES = ("shared", "perturbed")


class TrainingError(RuntimeError):
    pass


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-3
    decay_rate: float = 0.96
    decay_steps: int = 1000

    @classmethod
    def fresh(cls, n_params, base_lr=1e-3, decay_rate=0.96, decay_steps=1000):
        return cls(
            m=np.zeros(n_params),
            v=np.zeros(n_params),
            base_lr=base_lr,
            decay_rate=decay_rate,
            decay_steps=decay_steps,
        )

    def learning_rate(self) -> float:
        return self.base_lr * self.decay_rate ** (self.step / self.decay_steps)


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; mutates state and theta in place."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("theta/grad/state length mismatch")
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite gradient entry")
    state.step += 1
    lr = state.learning_rate()
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, theta


@dataclass
class TrainPlan:
    market: MarketParams
    domain: Domain
    net: MLPConfig
    weights: LossWeights = field(default_factory=LossWeights)
    n_interior: int = 150
    n_terminal: int = 128
    n_boundary: int = 128
    kink_fraction: float = 0.3
    stage1_epochs: int = 50_000
    stage2_epochs: int = 5_000
    ensemble_size: int = 30
    base_lr: float = 1e-3
    decay_rate: float = 0.96
    decay_steps: int = 1000
    seed: int = 0
    anchor_mode: str = "shared"
    anchor_scale: float = 0.05  # relative anchor jitter in "perturbed" mode

    def __post_init__(self):
        if min(self.stage1_epochs, self.stage2_epochs, self.ensemble_size) < 1:
            raise ValueError("epoch counts and ensemble size must be >= 1")
        if self.anchor_mode not in ANCHOR_MODES:
            raise ValueError(f"unknown anchor_mode {self.anchor_mode!r}")

    # deterministic seed derivation, stable across runs
    @property
    def init_seed(self):
        return self.seed

    @property
    def colloc_seed(self):
        return self.seed + 1_000

    def member_seed(self, m):
        return self.seed + 2_000 + m

    def anchor_jitter_seed(self, m):
        return self.seed + 3_000 + m


def _optimize(flat, data, weights, anchor, epochs, plan) -> list[LossBreakdown]:
    state = AdamState.fresh(
        flat.size,
        base_lr=plan.base_lr,
        decay_rate=plan.decay_rate,
        decay_steps=plan.decay_steps,
    )
    log = []
    for epoch in range(epochs):
        breakdown, grad = loss_and_grad(flat, data, weights, anchor)
        if not np.isfinite(breakdown.total):
            raise TrainingError(f"loss diverged at epoch {epoch}: {breakdown}")
        try:
            adam_step(state, flat, grad)
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}; breakdown {breakdown}") from exc
        log.append(breakdown)
    return log


def train_stage1(plan: TrainPlan):
    """Full-batch minimization of the composite loss from a fresh init.

    Returns (theta1, log).
    """
    net = MLP.init(plan.net, plan.init_seed)
    colloc = sample(
        plan.market,
        plan.domain,
        plan.n_interior,
        plan.n_terminal,
        plan.n_boundary,
        plan.kink_fraction,
        plan.colloc_seed,
    )
    data = TrainingData(plan.net, plan.market, colloc)
    flat = np.ascontiguousarray(net.flatten())
    log = _optimize(flat, data, plan.weights, None, plan.stage1_epochs, plan)
    return flat, log


def member_anchor(plan: TrainPlan, theta1: np.ndarray, m: int) -> np.ndarray:
    """Anchor vector for member m: shared theta1, or theta1 plus Gaussian
    jitter scaled to the RMS parameter magnitude."""
    if plan.anchor_mode == "shared":
        return theta1
    rng = np.random.default_rng(plan.anchor_jitter_seed(m))
    scale = plan.anchor_scale * float(np.sqrt(np.mean(theta1 * theta1)))
    return theta1 + rng.normal(0.0, scale, size=theta1.size)


def train_stage2_member(plan: TrainPlan, theta1: np.ndarray, m: int):
    """Anchored fine-tune of member m on member-resampled collocation.

    Returns (theta_m, log).
    """
    colloc = sample(
        plan.market,
        plan.domain,
        plan.n_interior,
        plan.n_terminal,
        plan.n_boundary,
        plan.kink_fraction,
        plan.member_seed(m),
    )
    data = TrainingData(plan.net, plan.market, colloc)
    anchor = member_anchor(plan, theta1, m)
    flat = theta1.copy()
    log = _optimize(flat, data, plan.weights, anchor, plan.stage2_epochs, plan)
    return flat, log


def run_ensemble(plan: TrainPlan, theta1: np.ndarray):
    """Stage-2 loop over all members. Any member failure aborts the run.

    Returns (member_thetas, member_logs).
    """
    thetas, logs = [], []
    for m in range(plan.ensemble_size):
        try:
            theta_m, log = train_stage2_member(plan, theta1, m)
        except TrainingError as exc:
            raise TrainingError(f"ensemble member {m} failed: {exc}") from exc
        thetas.append(theta_m)
        logs.append(log)
    return thetas, logs


def write_training_log(path, log: list[LossBreakdown]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,residual,terminal,boundary,obstacle,anchor,total\n")
        for i, row in enumerate(log):
            fh.write(
                f"{i},{row.residual:.10g},{row.terminal:.10g},{row.boundary:.10g},"
                f"{row.obstacle:.10g},{row.anchor:.10g},{row.total:.10g}\n"
            )
