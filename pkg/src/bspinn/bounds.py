"""No-arbitrage price bounds and the bounded logit/sigmoid output map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import AMER_PUT, EURO_CALL, EURO_PUT

_CLIP_MARGIN = 1e-6


class DegenerateBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class PriceBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise DegenerateBoundsError(
                f"need strictly ordered bounds, got L={self.lower}, U={self.upper}"
            )


def bounds_for(kind, S, K, r, tau):
    """Instrument-specific no-arbitrage bounds (L, U) as arrays.

    American put: L = max(K - S, 0), U = K.
    European call: L = max(S - K e^{-r tau}, 0), U = S.
    European put: L = max(K e^{-r tau} - S, 0), U = K e^{-r tau}.
    """
    S = np.asarray(S, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    disc = K * np.exp(-r * tau)
    if kind == AMER_PUT:
        L = np.maximum(K - S, 0.0)
        U = np.broadcast_to(np.float64(K), np.broadcast_shapes(S.shape, tau.shape)).copy()
    elif kind == EURO_CALL:
        L = np.maximum(S - disc, 0.0)
        U = np.broadcast_to(S, np.broadcast_shapes(S.shape, tau.shape)).astype(np.float64)
    elif kind == EURO_PUT:
        L = np.maximum(disc - S, 0.0)
        U = np.broadcast_to(disc, np.broadcast_shapes(S.shape, tau.shape)).astype(np.float64)
    else:
        raise ValueError(f"unknown instrument kind {kind!r}")
    return L, U


def bounds_at(kind, S, K, r, tau) -> PriceBounds:
    """Scalar bounds; rejects the degenerate L == U case."""
    L, U = bounds_for(kind, np.float64(S), K, r, np.float64(tau))
    return PriceBounds(float(L), float(U))


def to_logit(y, bounds: PriceBounds):
    """Map a price into logit space; values outside [L, U] are clipped
    (with a small interior margin) and counted.

    Returns (z, n_clipped).
    """
    y = np.asarray(y, dtype=np.float64)
    L, U = bounds.lower, bounds.upper
    width = U - L
    n_clipped = int(np.sum((y < L) | (y > U)))
    eps = _CLIP_MARGIN * width
    yc = np.clip(y, L + eps, U - eps)
    f = (yc - L) / width
    z = np.log(f / (1.0 - f))
    return (z if z.ndim else float(z)), n_clipped


def from_logit(z, bounds: PriceBounds):
    """Inverse sigmoid map; output is always strictly inside (L, U)."""
    z = np.asarray(z, dtype=np.float64)
    L, U = bounds.lower, bounds.upper
    y = L + (U - L) / (1.0 + np.exp(-z))
    return y if y.ndim else float(y)


def usable_for_output_transform(bounds: PriceBounds, K: float) -> bool:
    """The logit map blows up as the bounds pinch; fall back to identity
    below a width of 1e-8 K."""
    return (bounds.upper - bounds.lower) >= 1e-8 * K


def clip_labels(kind, y, S, K, r, tau):
    """Clip labels to the no-arbitrage bounds; returns (clipped, count)."""
    y = np.asarray(y, dtype=np.float64)
    L, U = bounds_for(kind, S, K, r, tau)
    clipped = np.clip(y, L, U)
    return clipped, int(np.sum(clipped != y))
