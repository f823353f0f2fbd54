"""Collocation point generation for the residual, terminal and boundary
loss terms, with optional densification near the payoff kink at S=K."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import MarketParams, payoff
from .fd import dirichlet_pair


@dataclass(frozen=True)
class Domain:
    s_min: float
    s_max: float
    maturity: float

    def __post_init__(self):
        if not (self.s_min < self.s_max and self.maturity > 0):
            raise ValueError("empty pricing domain")


@dataclass
class CollocationSet:
    interior_s: np.ndarray
    interior_t: np.ndarray
    terminal_s: np.ndarray
    terminal_targets: np.ndarray
    boundary_s: np.ndarray
    boundary_t: np.ndarray
    boundary_targets: np.ndarray
    seed: int

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("role,S,t,target\n")
            for s, t in zip(self.interior_s, self.interior_t):
                fh.write(f"interior,{s:.12g},{t:.12g},\n")
            for s, y in zip(self.terminal_s, self.terminal_targets):
                fh.write(f"terminal,{s:.12g},,{y:.12g}\n")
            for s, t, y in zip(self.boundary_s, self.boundary_t, self.boundary_targets):
                fh.write(f"boundary,{s:.12g},{t:.12g},{y:.12g}\n")


def boundary_targets(params: MarketParams, domain: Domain, s_b, t_b):
    """Dirichlet targets for points lying exactly on the S edges."""
    s_b = np.asarray(s_b, dtype=np.float64)
    t_b = np.asarray(t_b, dtype=np.float64)
    on_lower = s_b == domain.s_min
    on_upper = s_b == domain.s_max
    if not np.all(on_lower | on_upper):
        raise ValueError("boundary point off the S_min/S_max edges")
    lower, upper = dirichlet_pair(params, domain.s_min, domain.s_max, t_b)
    return np.where(on_lower, lower, upper)


def sample(
    params: MarketParams,
    domain: Domain,
    n_interior: int,
    n_terminal: int,
    n_boundary: int,
    kink_fraction: float = 0.3,
    seed: int = 0,
) -> CollocationSet:
    """Draw the three collocation sets.

    A ``kink_fraction`` share of interior points takes S from a normal
    centered at the strike (scale 0.1 K) truncated to the domain by
    rejection; the rest is uniform. Terminal S values are stratified
    uniform; boundary points split evenly between the two edges.
    """
    if min(n_interior, n_terminal, n_boundary) < 1:
        raise ValueError("collocation counts must be >= 1")
    if not 0.0 <= kink_fraction <= 1.0:
        raise ValueError("kink_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    lo, hi, T = domain.s_min, domain.s_max, domain.maturity

    n_kink = int(round(kink_fraction * n_interior))
    n_unif = n_interior - n_kink
    s_unif = rng.uniform(lo, hi, size=n_unif)
    s_kink = np.empty(n_kink)
    filled = 0
    while filled < n_kink:
        draw = rng.normal(params.strike, 0.1 * params.strike, size=2 * (n_kink - filled))
        draw = draw[(draw > lo) & (draw < hi)][: n_kink - filled]
        s_kink[filled : filled + draw.size] = draw
        filled += draw.size
    interior_s = np.concatenate([s_unif, s_kink])
    interior_t = rng.uniform(0.0, T, size=n_interior)
    # keep interior points strictly inside the open box
    eps_s = 1e-12 * (hi - lo)
    eps_t = 1e-12 * T
    interior_s = np.clip(interior_s, lo + eps_s, hi - eps_s)
    interior_t = np.clip(interior_t, eps_t, T - eps_t)

    strata = np.linspace(lo, hi, n_terminal + 1)
    terminal_s = strata[:-1] + rng.uniform(0.0, 1.0, size=n_terminal) * np.diff(strata)
    terminal_targets = payoff(params.kind, terminal_s, params.strike)

    n_lower = n_boundary // 2 + n_boundary % 2
    boundary_s = np.concatenate([np.full(n_lower, lo), np.full(n_boundary - n_lower, hi)])
    boundary_t = rng.uniform(0.0, T, size=n_boundary)
    btargets = boundary_targets(params, domain, boundary_s, boundary_t)

    return CollocationSet(
        interior_s,
        interior_t,
        terminal_s,
        np.asarray(terminal_targets, dtype=np.float64),
        boundary_s,
        boundary_t,
        np.asarray(btargets, dtype=np.float64),
        seed,
    )
