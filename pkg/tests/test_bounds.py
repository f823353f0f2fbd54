import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bspinn.analytic import AMER_PUT, EURO_CALL, EURO_PUT, MarketParams, bs_price
from bspinn.bounds import (
    DegenerateBoundsError,
    PriceBounds,
    bounds_at,
    bounds_for,
    clip_labels,
    from_logit,
    to_logit,
    usable_for_output_transform,
)


def test_price_bounds_ordering():
    PriceBounds(0.0, 1.0)
    with pytest.raises(DegenerateBoundsError):
        PriceBounds(1.0, 1.0)
    with pytest.raises(DegenerateBoundsError):
        PriceBounds(2.0, 1.0)


def test_bounds_per_instrument():
    S = np.array([10.0, 45.0, 100.0])
    disc = 45.0 * math.exp(-0.05 * 0.5)
    L, U = bounds_for(AMER_PUT, S, 45.0, 0.05, 0.5)
    assert L == pytest.approx([35.0, 0.0, 0.0])
    assert U == pytest.approx([45.0, 45.0, 45.0])
    L, U = bounds_for(EURO_CALL, S, 45.0, 0.05, 0.5)
    assert L == pytest.approx([0.0, max(45.0 - disc, 0.0), 100.0 - disc])
    assert U == pytest.approx(S)
    L, U = bounds_for(EURO_PUT, S, 45.0, 0.05, 0.5)
    assert L == pytest.approx([disc - 10.0, 0.0, 0.0])
    assert U == pytest.approx([disc, disc, disc])
    with pytest.raises(ValueError):
        bounds_for("swaption", S, 45.0, 0.05, 0.5)


def test_bounds_contain_analytic_prices():
    for kind in (EURO_CALL, EURO_PUT):
        params = MarketParams(0.05, 0.2, 45.0, 0.5, kind)
        S = np.linspace(0.5, 135.0, 100)
        v = bs_price(params, S, 0.1)
        L, U = bounds_for(kind, S, 45.0, 0.05, 0.4)
        assert np.all(v >= L - 1e-9)
        assert np.all(v <= U + 1e-9)


def test_bounds_at_degenerate_call_at_zero_spot():
    # European call at S=0 has L = U = 0
    with pytest.raises(DegenerateBoundsError):
        bounds_at(EURO_CALL, 0.0, 45.0, 0.05, 0.5)


def test_logit_roundtrip():
    b = PriceBounds(0.0, 45.0)
    y = np.linspace(0.001, 44.999, 50)
    z, n_clipped = to_logit(y, b)
    assert n_clipped == 0
    assert from_logit(z, b) == pytest.approx(y, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(-30.0, 30.0))
def test_logit_roundtrip_from_z(z):
    b = PriceBounds(2.0, 47.0)
    y = from_logit(z, b)
    assert 2.0 < y < 47.0
    z2, n = to_logit(y, b)
    assert n == 0
    if abs(z) < 12.0:  # beyond that the sigmoid saturates in float64
        assert z2 == pytest.approx(z, rel=1e-6, abs=1e-6)


def test_logit_clips_and_counts():
    b = PriceBounds(0.0, 10.0)
    z, n = to_logit(np.array([-1.0, 5.0, 11.0]), b)
    assert n == 2
    assert np.all(np.isfinite(z))
    back = from_logit(z, b)
    assert back[0] == pytest.approx(1e-5, rel=1e-6)
    assert back[2] == pytest.approx(10.0 - 1e-5, rel=1e-6)


def test_usable_width_threshold():
    assert usable_for_output_transform(PriceBounds(0.0, 1.0), 45.0)
    assert not usable_for_output_transform(PriceBounds(0.0, 1e-7 * 45.0 * 0.05), 45.0)


def test_clip_labels():
    S = np.array([10.0, 45.0])
    y = np.array([50.0, -1.0])  # above U=45, below L=0
    clipped, n = clip_labels(AMER_PUT, y, S, 45.0, 0.05, 0.5)
    assert n == 2
    assert clipped == pytest.approx([45.0, 0.0])
    ok, n_ok = clip_labels(AMER_PUT, np.array([36.0, 1.0]), S, 45.0, 0.05, 0.5)
    assert n_ok == 0
    assert ok == pytest.approx([36.0, 1.0])
