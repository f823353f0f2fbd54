"""Finite-difference and lattice reference solvers.

Crank-Nicolson (with a Rannacher start) for European options, projected
SOR for the American put obstacle problem, and a CRR binomial tree used
as an independent check on the PSOR solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import kernels
from .analytic import AMER_PUT, EURO_CALL, EURO_PUT, MarketParams, payoff


class ConvergenceError(RuntimeError):
    pass


@dataclass
class FDGrid:
    """values[k, i] is the option value at (t=t_axis[k], S=s_axis[i])."""

    s_axis: np.ndarray
    t_axis: np.ndarray
    values: np.ndarray

    def slice_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.t_axis - t)))
        if abs(self.t_axis[k] - t) > 1e-9 * max(1.0, self.t_axis[-1]):
            raise ValueError(f"t={t} is not a grid time level")
        return self.values[k]

    def at(self, S, t):
        """Bilinear interpolation of the value surface."""
        S = np.asarray(S, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        S_b, t_b = np.broadcast_arrays(S, t)
        ds = self.s_axis[1] - self.s_axis[0]
        dt = self.t_axis[1] - self.t_axis[0]
        fi = np.clip((S_b - self.s_axis[0]) / ds, 0, len(self.s_axis) - 1)
        fk = np.clip((t_b - self.t_axis[0]) / dt, 0, len(self.t_axis) - 1)
        i0 = np.minimum(fi.astype(np.int64), len(self.s_axis) - 2)
        k0 = np.minimum(fk.astype(np.int64), len(self.t_axis) - 2)
        wi = fi - i0
        wk = fk - k0
        v = (
            self.values[k0, i0] * (1 - wk) * (1 - wi)
            + self.values[k0, i0 + 1] * (1 - wk) * wi
            + self.values[k0 + 1, i0] * wk * (1 - wi)
            + self.values[k0 + 1, i0 + 1] * wk * wi
        )
        return v if v.ndim else float(v)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("S,t,value\n")
            for k, t in enumerate(self.t_axis):
                for i, s in enumerate(self.s_axis):
                    fh.write(f"{s:.10g},{t:.10g},{self.values[k, i]:.12g}\n")


def dirichlet_pair(params: MarketParams, s_min: float, s_max: float, t):
    """Dirichlet boundary targets (lower, upper) at time(s) t."""
    t = np.asarray(t, dtype=np.float64)
    tau = params.maturity - t
    disc = params.strike * np.exp(-params.rate * tau)
    if params.kind == EURO_CALL:
        lower = np.zeros_like(tau)
        upper = s_max - disc
    elif params.kind == EURO_PUT:
        lower = np.maximum(disc - s_min, 0.0)
        upper = np.zeros_like(tau)
    else:  # American put: immediate exercise at the lower edge
        lower = np.full_like(tau, params.strike - s_min)
        upper = np.zeros_like(tau)
    return lower, upper


def _operator_bands(params: MarketParams, s_int: np.ndarray, ds: float):
    # spatial operator L V = 0.5 sig^2 S^2 V_SS + r S V_S - r V on interior nodes
    a = 0.5 * params.sigma**2 * s_int**2
    b = params.rate * s_int
    lo = a / ds**2 - b / (2 * ds)
    di = -2 * a / ds**2 - params.rate
    up = a / ds**2 + b / (2 * ds)
    return lo, di, up


def _grid(params: MarketParams, s_max: float, n_s: int, n_t: int):
    if n_s < 4 or n_t < 4:
        raise ValueError("need at least 4 grid intervals in each direction")
    s = np.linspace(0.0, s_max, n_s + 1)
    t = np.linspace(0.0, params.maturity, n_t + 1)
    return s, t


def crank_nicolson(params: MarketParams, s_max: float, n_s: int, n_t: int) -> FDGrid:
    """Backward CN march for a European instrument.

    The first backward step is replaced by two implicit-Euler half steps
    to damp the oscillation seeded by the payoff kink.
    """
    if params.kind not in (EURO_CALL, EURO_PUT):
        raise ValueError("crank_nicolson prices European instruments")
    s, t = _grid(params, s_max, n_s, n_t)
    ds = s[1] - s[0]
    dt = t[1] - t[0]
    lo, di, up = _operator_bands(params, s[1:-1], ds)
    lower_bc, upper_bc = dirichlet_pair(params, s[0], s[-1], t)

    values = np.empty((n_t + 1, n_s + 1))
    values[n_t] = payoff(params.kind, s, params.strike)

    def step(v_next, theta, h, t_lo, t_up):
        # (I - theta h L) v = (I + (1-theta) h L) v_next + boundary terms
        rhs = v_next[1:-1].copy()
        if theta < 1.0:
            w = (1.0 - theta) * h
            rhs += w * (lo * v_next[:-2] + di * v_next[1:-1] + up * v_next[2:])
        ab = np.zeros((3, n_s - 1))
        ab[0, 1:] = -theta * h * up[:-1]
        ab[1] = 1.0 - theta * h * di
        ab[2, :-1] = -theta * h * lo[1:]
        rhs[0] += theta * h * lo[0] * t_lo
        rhs[-1] += theta * h * up[-1] * t_up
        v = np.empty(n_s + 1)
        v[0] = t_lo
        v[-1] = t_up
        v[1:-1] = solve_banded((1, 1), ab, rhs)
        return v

    for k in range(n_t - 1, -1, -1):
        if k == n_t - 1:
            # Rannacher start: two implicit half steps
            mid = step(values[k + 1], 1.0, dt / 2, lower_bc[k], upper_bc[k])
            values[k] = step(mid, 1.0, dt / 2, lower_bc[k], upper_bc[k])
        else:
            values[k] = step(values[k + 1], 0.5, dt, lower_bc[k], upper_bc[k])
    return FDGrid(s, t, values)


def psor_american_put(
    params: MarketParams,
    s_max: float,
    n_s: int,
    n_t: int,
    omega: float = 1.5,
    tol: float = 1e-8,
    max_iter: int = 10_000,
):
    """CN/PSOR solve of the American put complementarity problem.

    Returns (FDGrid, iteration counts per time step).
    """
    if params.kind != AMER_PUT:
        raise ValueError("psor_american_put requires the amer_put kind")
    if not 1.0 < omega < 2.0:
        raise ValueError("relaxation factor omega must lie in (1, 2)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    s, t = _grid(params, s_max, n_s, n_t)
    ds = s[1] - s[0]
    dt = t[1] - t[0]
    lo, di, up = _operator_bands(params, s[1:-1], ds)
    lower_bc, upper_bc = dirichlet_pair(params, s[0], s[-1], t)
    pay = payoff(AMER_PUT, s, params.strike)
    obstacle = pay[1:-1].copy()

    values = np.empty((n_t + 1, n_s + 1))
    values[n_t] = pay
    iters = np.zeros(n_t, dtype=np.int64)

    def step(v_next, theta, h, t_lo, t_up, v_guess):
        rhs = v_next[1:-1].copy()
        if theta < 1.0:
            w = (1.0 - theta) * h
            rhs += w * (lo * v_next[:-2] + di * v_next[1:-1] + up * v_next[2:])
        rhs[0] += theta * h * lo[0] * t_lo
        rhs[-1] += theta * h * up[-1] * t_up
        band_lo = np.empty(n_s - 1)
        band_up = np.empty(n_s - 1)
        band_lo[0] = 0.0
        band_lo[1:] = -theta * h * lo[1:]
        band_up[-1] = 0.0
        band_up[:-1] = -theta * h * up[:-1]
        band_di = 1.0 - theta * h * di
        v = np.maximum(v_guess[1:-1].copy(), obstacle)
        count = kernels.psor_step(
            v, band_lo, band_di, band_up, rhs, obstacle, omega, tol, max_iter
        )
        if count < 0:
            raise ConvergenceError(
                f"PSOR did not converge within {max_iter} sweeps (tol={tol})"
            )
        out = np.empty(n_s + 1)
        out[0] = max(t_lo, pay[0])
        out[-1] = max(t_up, pay[-1])
        out[1:-1] = v
        return out, count

    for k in range(n_t - 1, -1, -1):
        if k == n_t - 1:
            mid, c1 = step(values[k + 1], 1.0, dt / 2, lower_bc[k], upper_bc[k], values[k + 1])
            values[k], c2 = step(mid, 1.0, dt / 2, lower_bc[k], upper_bc[k], mid)
            iters[k] = c1 + c2
        else:
            values[k], iters[k] = step(
                values[k + 1], 0.5, dt, lower_bc[k], upper_bc[k], values[k + 1]
            )
    return FDGrid(s, t, values), iters


def binomial_tree(params: MarketParams, spot: float, steps: int) -> float:
    """CRR tree value at (spot, t=0); American exercise applied for puts."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = params.maturity / steps
    u = math.exp(params.sigma * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-params.rate * dt)
    p = (math.exp(params.rate * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("risk-neutral probability outside (0,1); refine steps")

    j = np.arange(steps + 1)
    prices = spot * u ** (2 * j - steps)
    v = payoff(params.kind, prices, params.strike)
    american = params.kind == AMER_PUT
    for k in range(steps - 1, -1, -1):
        j = np.arange(k + 1)
        prices = spot * u ** (2 * j - k)
        v = disc * (p * v[1:] + (1 - p) * v[:-1])
        if american:
            v = np.maximum(v, payoff(params.kind, prices, params.strike))
    return float(v[0])
