"""PDE residual, composite training loss, obstacle and anchor penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from dataclasses import replace as _replace

from .analytic import AMER_PUT, EURO_PUT, MarketParams, bs_price, payoff
from .network import MLP, ShapeError, transform_coefficients, transform_inputs
from .sampler import CollocationSet


@dataclass(frozen=True)
class LossWeights:
    residual: float = 1.0
    terminal: float = 10.0
    boundary: float = 10.0
    obstacle: float = 10.0
    anchor: float = 1e-3

    def __post_init__(self):
        if min(self.residual, self.terminal, self.boundary) <= 0:
            raise ValueError("residual/terminal/boundary weights must be positive")
        if self.obstacle < 0 or self.anchor < 0:
            raise ValueError("obstacle and anchor weights must be nonnegative")


@dataclass
class LossBreakdown:
    residual: float
    terminal: float
    boundary: float
    obstacle: float
    anchor: float
    total: float

    @classmethod
    def combine(cls, w: LossWeights, res, term, bound, obs, anchor):
        total = (
            w.residual * res
            + w.terminal * term
            + w.boundary * bound
            + w.obstacle * obs
            + anchor
        )
        return cls(res, term, bound, obs, anchor, total)


def _stack(x1, x2):
    return np.ascontiguousarray(np.stack(np.broadcast_arrays(x1, x2), axis=-1), dtype=np.float64)


class TrainingData:
    """Collocation set pre-baked into kernel-ready arrays."""

    def __init__(self, net_config, market: MarketParams, colloc: CollocationSet):
        T = market.maturity
        x1, x2 = transform_inputs(net_config, colloc.interior_s, colloc.interior_t)
        self.x_interior = _stack(x1, x2)
        c1, c11, c2 = transform_coefficients(net_config, colloc.interior_s)
        zeros = np.zeros_like(colloc.interior_s)
        self.p_seed = _stack(c1, zeros)
        self.q_seed = _stack(c11, zeros)
        self.u_seed = _stack(zeros, np.full_like(zeros, c2))
        self.s_interior = np.ascontiguousarray(colloc.interior_s)
        self.pay_interior = np.ascontiguousarray(
            payoff(market.kind, colloc.interior_s, market.strike)
        )
        x1, x2 = transform_inputs(net_config, colloc.terminal_s, np.full_like(colloc.terminal_s, T))
        self.x_terminal = _stack(x1, x2)
        self.y_terminal = np.ascontiguousarray(colloc.terminal_targets)
        x1, x2 = transform_inputs(net_config, colloc.boundary_s, colloc.boundary_t)
        self.x_boundary = _stack(x1, x2)
        self.y_boundary = np.ascontiguousarray(colloc.boundary_targets)
        self.market = market
        self.use_obstacle = 1 if market.kind == AMER_PUT else 0
        self.cap_interior = np.ascontiguousarray(
            price_cap(market, colloc.interior_s, colloc.interior_t)
            if self.use_obstacle
            else np.zeros_like(colloc.interior_s)
        )
        self.sizes = np.asarray(net_config.layer_sizes, dtype=np.int64)


def price_cap(market: MarketParams, S, t):
    """No-arbitrage upper bound for the American put.

    The early-exercise premium is at most the interest earned on the
    strike, so V <= European put + K(1 - e^{-r tau}). Deep in the money
    the European put approaches K e^{-r tau} - S, making the cap tight
    (payoff + O(S * (1 - e^{-r tau}))) exactly where the value equals
    the payoff.
    """
    if market.kind != AMER_PUT:
        raise ValueError("price_cap applies to the American put only")
    t = np.asarray(t, dtype=np.float64)
    euro = bs_price(_replace(market, kind=EURO_PUT), S, t)
    tau = np.maximum(market.maturity - t, 0.0)
    return euro + market.strike * (1.0 - np.exp(-market.rate * tau))


def anchor_penalty(theta: np.ndarray, theta_anchor: np.ndarray, lam_anchor: float) -> float:
    """(lam / n_params) * squared distance to the anchor vector."""
    if theta.shape != theta_anchor.shape:
        raise ShapeError("parameter and anchor vectors differ in length")
    if lam_anchor == 0.0:
        return 0.0
    diff = theta - theta_anchor
    return lam_anchor / theta.size * float(np.dot(diff, diff))


def loss_and_grad(
    flat: np.ndarray,
    data: TrainingData,
    weights: LossWeights,
    anchor: np.ndarray | None = None,
):
    """Full training loss and its parameter gradient.

    With ``anchor`` None (or anchor weight 0) this is the plain composite
    loss; otherwise the quadratic anchor pull is added.
    """
    grad = np.zeros_like(flat)
    res, obs = kernels.interior_loss_grad(
        flat,
        data.sizes,
        data.x_interior,
        data.p_seed,
        data.q_seed,
        data.u_seed,
        data.s_interior,
        data.market.rate,
        0.5 * data.market.sigma**2,
        data.pay_interior,
        data.cap_interior,
        weights.residual,
        weights.obstacle,
        data.use_obstacle,
        grad,
    )
    term = kernels.mse_loss_grad(
        flat, data.sizes, data.x_terminal, data.y_terminal, weights.terminal, grad
    )
    bound = kernels.mse_loss_grad(
        flat, data.sizes, data.x_boundary, data.y_boundary, weights.boundary, grad
    )
    anc = 0.0
    if anchor is not None and weights.anchor > 0.0:
        anc = anchor_penalty(flat, anchor, weights.anchor)
        grad += (2.0 * weights.anchor / flat.size) * (flat - anchor)
    breakdown = LossBreakdown.combine(weights, res, term, bound, obs if data.use_obstacle else 0.0, anc)
    return breakdown, grad


def bs_residual(net: MLP, market: MarketParams, S, t):
    """Black-Scholes operator applied to the surrogate at (S, t)."""
    S = np.atleast_1d(np.asarray(S, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    S, t = np.broadcast_arrays(S, t)
    cfg = net.config
    x1, x2 = transform_inputs(cfg, S, t)
    X = _stack(x1, x2)
    c1, c11, c2 = transform_coefficients(cfg, S)
    zeros = np.zeros_like(S, dtype=np.float64)
    flat = np.ascontiguousarray(net.flatten())
    V, P, Q, U = kernels.derivs_forward(
        flat,
        np.asarray(cfg.layer_sizes, dtype=np.int64),
        X,
        _stack(c1, zeros),
        _stack(c11, zeros),
        _stack(zeros, np.full_like(zeros, c2)),
    )
    r, sig = market.rate, market.sigma
    out = U + 0.5 * sig * sig * S * S * Q + r * S * P - r * V
    return out if out.shape != (1,) else float(out[0])


def pinn_loss(
    net: MLP,
    colloc: CollocationSet,
    market: MarketParams,
    weights: LossWeights,
    anchor: np.ndarray | None = None,
) -> LossBreakdown:
    """Composite loss breakdown for a surrogate on a collocation set."""
    data = TrainingData(net.config, market, colloc)
    flat = np.ascontiguousarray(net.flatten())
    breakdown, _ = loss_and_grad(flat, data, weights, anchor)
    return breakdown


def obstacle_penalty(net: MLP, market: MarketParams, S, t) -> float:
    """Mean squared early-exercise violation over the given points."""
    S = np.asarray(S, dtype=np.float64)
    v = net.forward(S, t)
    viol = np.maximum(payoff(market.kind, S, market.strike) - v, 0.0)
    return float(np.mean(viol * viol))
