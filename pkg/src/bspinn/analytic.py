"""Closed-form Black-Scholes prices for European options."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

EURO_CALL = "euro_call"
EURO_PUT = "euro_put"
AMER_PUT = "amer_put"
KINDS = (EURO_CALL, EURO_PUT, AMER_PUT)


@dataclass(frozen=True)
class MarketParams:
    rate: float
    sigma: float
    strike: float
    maturity: float
    kind: str

    def __post_init__(self):
        if self.sigma <= 0 or self.strike <= 0 or self.maturity <= 0:
            raise ValueError("sigma, strike and maturity must be positive")
        if not math.isfinite(self.rate):
            raise ValueError("rate must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown instrument kind {self.kind!r}")


def norm_cdf(x):
    """Standard normal CDF via erf."""
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    return out if out.ndim else float(out)


def payoff(kind, S, K):
    S = np.asarray(S, dtype=np.float64)
    if kind == EURO_CALL:
        out = np.maximum(S - K, 0.0)
    else:
        out = np.maximum(K - S, 0.0)
    return out if out.ndim else float(out)


def bs_price(params: MarketParams, S, t):
    """European call/put value at (S, t); S=0 and t=T handled as limits."""
    if params.kind not in (EURO_CALL, EURO_PUT):
        raise ValueError("bs_price handles European instruments only")
    S = np.asarray(S, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    r, sig, K = params.rate, params.sigma, params.strike
    tau = np.maximum(params.maturity - t, 0.0)

    S_b, tau_b = np.broadcast_arrays(S, tau)
    out = np.empty(S_b.shape, dtype=np.float64)

    expired = tau_b <= 0.0
    out[expired] = payoff(params.kind, S_b[expired], K)

    live = ~expired
    degenerate = live & (S_b <= 0.0)
    disc = K * np.exp(-r * tau_b[degenerate])
    out[degenerate] = 0.0 if params.kind == EURO_CALL else 1.0
    out[degenerate] *= disc

    reg = live & (S_b > 0.0)
    Sr, taur = S_b[reg], tau_b[reg]
    sqt = sig * np.sqrt(taur)
    d1 = (np.log(Sr / K) + (r + 0.5 * sig * sig) * taur) / sqt
    d2 = d1 - sqt
    disc = K * np.exp(-r * taur)
    if params.kind == EURO_CALL:
        out[reg] = Sr * norm_cdf(d1) - disc * norm_cdf(d2)
    else:
        out[reg] = disc * norm_cdf(-d2) - Sr * norm_cdf(-d1)
    return out if out.ndim else float(out)
