"""Fully connected price surrogate and its parameter/checkpoint plumbing."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Quad

INPUT_TRANSFORMS = ("identity", "scaled", "log_moneyness")
OUTPUT_TRANSFORMS = ("identity", "bounded_logit")

_MAGIC = b"BSPN"
_VERSION = 1


class ShapeError(ValueError):
    pass


def transform_inputs(config, S, t):
    """Map raw (S, t) to network coordinates x1, x2."""
    if config.input_transform == "identity":
        return S, t
    if config.input_transform == "scaled":
        return S / config.strike, t / config.maturity
    # log-moneyness
    if np.any(np.asarray(S) <= 0):
        raise ValueError("log_moneyness input transform requires S > 0")
    denom = config.sigma * math.sqrt(config.maturity)
    return np.log(S / config.strike) / denom, t / config.maturity


def transform_coefficients(config, S):
    """(dx1/dS, d2x1/dS2, dx2/dt) at each S, for derivative seeding."""
    S = np.asarray(S, dtype=np.float64)
    if config.input_transform == "identity":
        return np.ones_like(S), np.zeros_like(S), 1.0
    if config.input_transform == "scaled":
        return np.full_like(S, 1.0 / config.strike), np.zeros_like(S), 1.0 / config.maturity
    if np.any(S <= 0):
        raise ValueError("log_moneyness input transform requires S > 0")
    denom = config.sigma * math.sqrt(config.maturity)
    return 1.0 / (S * denom), -1.0 / (S * S * denom), 1.0 / config.maturity


@dataclass
class MLPConfig:
    input_dim: int = 2
    hidden_layers: int = 4
    hidden_width: int = 50
    input_transform: str = "scaled"
    output_transform: str = "identity"
    # scale constants used by the non-identity input transforms
    strike: float = 45.0
    sigma: float = 0.2
    maturity: float = 0.5

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")
        if self.input_transform not in INPUT_TRANSFORMS:
            raise ValueError(f"unknown input_transform {self.input_transform!r}")
        if self.output_transform not in OUTPUT_TRANSFORMS:
            raise ValueError(f"unknown output_transform {self.output_transform!r}")

    @property
    def layer_sizes(self):
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]

    @property
    def n_params(self):
        sizes = self.layer_sizes
        return sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))


@dataclass
class MLP:
    """tanh MLP with scalar output; weights kept as per-layer (W, b) pairs."""

    config: MLPConfig
    weights: list = field(default_factory=list)   # W_l of shape (out, in)
    biases: list = field(default_factory=list)    # b_l of shape (out,)

    # -- construction -------------------------------------------------

    @classmethod
    def init(cls, config: MLPConfig, seed: int) -> "MLP":
        """Glorot-uniform weights, zero biases, deterministic in seed."""
        rng = np.random.default_rng(seed)
        sizes = config.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(config, weights, biases)

    # -- parameter vector ---------------------------------------------

    def flatten(self) -> np.ndarray:
        """Canonical order: per layer, row-major weights then biases."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, config: MLPConfig, flat: np.ndarray) -> "MLP":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != config.n_params:
            raise ShapeError(
                f"parameter vector of length {flat.size}, expected {config.n_params}"
            )
        sizes = config.layer_sizes
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in).copy())
            pos += fan_out * fan_in
            biases.append(flat[pos : pos + fan_out].copy())
            pos += fan_out
        return cls(config, weights, biases)

    # -- input transform ----------------------------------------------

    def transform_inputs(self, S, t):
        return transform_inputs(self.config, S, t)

    def transform_coefficients(self, S):
        return transform_coefficients(self.config, S)

    # -- evaluation ----------------------------------------------------

    def forward_raw(self, S, t) -> np.ndarray:
        """Network output before any output transform; vectorized."""
        S = np.asarray(S, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        x1, x2 = self.transform_inputs(S, t)
        a = np.stack(np.broadcast_arrays(x1, x2), axis=-1)
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ W.T + b
            if i != last:
                a = np.tanh(a)
        return a[..., 0]

    def forward(self, S, t, market=None) -> np.ndarray:
        """Surrogate price; applies the bounded-logit map when configured.

        ``market`` (a MarketParams) is required for the bounded_logit
        output transform, which needs instrument-specific bounds.
        """
        raw = self.forward_raw(S, t)
        if self.config.output_transform == "identity":
            return raw
        from .bounds import bounds_for  # local import avoids a cycle

        if market is None:
            raise ValueError("bounded_logit output transform needs market params")
        S = np.asarray(S, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        tau = market.maturity - t
        L, U = bounds_for(market.kind, S, market.strike, market.rate, tau)
        return L + (U - L) / (1.0 + np.exp(-raw))

    def forward_generic(self, x1, x2):
        """Forward pass on duck-typed scalars (Quad or Node components).

        Inputs are already-transformed network coordinates.
        """
        a = [x1, x2]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            out = []
            for j in range(W.shape[0]):
                z = b[j] + sum(W[j, k] * a[k] for k in range(W.shape[1]))
                out.append(z.tanh() if (i != last and hasattr(z, "tanh")) else
                           (np.tanh(z) if i != last else z))
            a = out
        return a[0]


def input_derivatives(net: MLP, S: float, t: float):
    """(V, dV/dS, d2V/dS2, dV/dt) at a single point, via forward-mode Quad.

    Only defined for the identity output transform: the bounded-logit map's
    bounds are non-smooth in S.
    """
    if net.config.output_transform != "identity":
        raise ValueError("input derivatives require the identity output transform")
    c1, c11, c2 = net.transform_coefficients(np.float64(S))
    x1v, x2v = net.transform_inputs(float(S), float(t))
    x1 = Quad(float(x1v), ds=float(c1), dss=float(c11))
    x2 = Quad(float(x2v), dt=float(c2))
    out = net.forward_generic(x1, x2)
    return out.v, out.ds, out.dss, out.dt


# -- checkpoint io -----------------------------------------------------

def save_checkpoint(path, net: MLP) -> None:
    cfg = net.config
    header = struct.pack(
        "<4s6I",
        _MAGIC,
        _VERSION,
        cfg.input_dim,
        cfg.hidden_layers,
        cfg.hidden_width,
        INPUT_TRANSFORMS.index(cfg.input_transform),
        OUTPUT_TRANSFORMS.index(cfg.output_transform),
    )
    scales = struct.pack("<3d", cfg.strike, cfg.sigma, cfg.maturity)
    flat = np.ascontiguousarray(net.flatten(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(scales)
        fh.write(flat.tobytes())


def load_checkpoint(path) -> MLP:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, version, input_dim, layers, width, itr, otr = struct.unpack_from("<4s6I", blob, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a BSPN checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    strike, sigma, maturity = struct.unpack_from("<3d", blob, 28)
    config = MLPConfig(
        input_dim=input_dim,
        hidden_layers=layers,
        hidden_width=width,
        input_transform=INPUT_TRANSFORMS[itr],
        output_transform=OUTPUT_TRANSFORMS[otr],
        strike=strike,
        sigma=sigma,
        maturity=maturity,
    )
    flat = np.frombuffer(blob, dtype="<f8", offset=52)
    return MLP.unflatten(config, flat)
