"""Vectorized training kernels with optional numba acceleration.

Every kernel is written once as numpy code that numba can compile in
nopython mode. At import the module binds the public names either to
@njit-compiled versions (the default when numba is installed) or to the
plain-numpy originals. Set ``BSPINN_NUMBA=0`` to force the numpy path.

Parameters travel as one flat float64 vector in the canonical flatten
order (per layer: row-major weights, then biases); ``sizes`` is the layer
width vector, e.g. [2, 50, 50, 50, 50, 1].

The derivative kernels propagate four channels per unit -- value, d/dS,
d2/dS2 and d/dt -- through the forward pass, then run reverse mode over
the channel recurrences to get parameter gradients of residual-type
losses. Correctness is pinned against the scalar tape in
``bspinn.autodiff`` by the test suite.
"""

from __future__ import annotations

import os

import numpy as np


def value_forward(flat, sizes, X):
    """Network values at rows of X (already-transformed inputs)."""
    n_layers = sizes.shape[0] - 1
    a = X
    pos = 0
    for l in range(n_layers):
        fi = sizes[l]
        fo = sizes[l + 1]
        W = flat[pos : pos + fo * fi].reshape(fo, fi)
        pos += fo * fi
        b = flat[pos : pos + fo]
        pos += fo
        z = np.dot(a, W.T) + b
        a = np.tanh(z) if l < n_layers - 1 else z
    return a[:, 0].copy()


def derivs_forward(flat, sizes, X, P0, Q0, U0):
    """(V, dV/dS, d2V/dS2, dV/dt) at rows of X.

    P0/Q0/U0 are the channel seeds of the input coordinates: rows
    (dx1/dS, dx2/dS), (d2x1/dS2, d2x2/dS2), (dx1/dt, dx2/dt).
    """
    n_layers = sizes.shape[0] - 1
    av, ap, aq, au = X, P0, Q0, U0
    pos = 0
    for l in range(n_layers):
        fi = sizes[l]
        fo = sizes[l + 1]
        W = flat[pos : pos + fo * fi].reshape(fo, fi)
        pos += fo * fi
        b = flat[pos : pos + fo]
        pos += fo
        zv = np.dot(av, W.T) + b
        zp = np.dot(ap, W.T)
        zq = np.dot(aq, W.T)
        zu = np.dot(au, W.T)
        if l < n_layers - 1:
            a = np.tanh(zv)
            d = 1.0 - a * a
            av = a
            ap = d * zp
            aq = d * zq - 2.0 * a * d * zp * zp
            au = d * zu
        else:
            av, ap, aq, au = zv, zp, zq, zu
    return av[:, 0].copy(), ap[:, 0].copy(), aq[:, 0].copy(), au[:, 0].copy()


def mse_loss_grad(flat, sizes, X, y, lam, grad):
    """Mean squared mismatch to targets y; accumulates lam-weighted
    parameter gradient into ``grad``. Returns the unweighted term."""
    n_layers = sizes.shape[0] - 1
    n = X.shape[0]
    # forward, caching layer inputs
    acts = [X]
    a = X
    pos = 0
    for l in range(n_layers):
        fi = sizes[l]
        fo = sizes[l + 1]
        W = flat[pos : pos + fo * fi].reshape(fo, fi)
        pos += fo * fi
        b = flat[pos : pos + fo]
        pos += fo
        z = np.dot(a, W.T) + b
        a = np.tanh(z) if l < n_layers - 1 else z
        acts.append(a)
    resid = acts[n_layers][:, 0] - y
    term = np.mean(resid * resid)

    delta = (2.0 * lam / n) * resid.reshape(n, 1)
    for l in range(n_layers - 1, -1, -1):
        fi = sizes[l]
        fo = sizes[l + 1]
        pos -= fo * fi + fo
        off_w = pos
        off_b = pos + fo * fi
        W = flat[off_w : off_w + fo * fi].reshape(fo, fi)
        gW = np.dot(delta.T, acts[l])
        grad[off_w : off_w + fo * fi] += gW.ravel()
        grad[off_b : off_b + fo] += np.sum(delta, axis=0)
        if l > 0:
            da = np.dot(delta, W)
            h = acts[l]
            delta = da * (1.0 - h * h)
    return term


def interior_loss_grad(
    flat, sizes, X, P0, Q0, U0, S, rate, half_sig2, pay, vcap, lam_r, lam_obs, use_obstacle, grad
):
    """PDE-residual term (plus optional obstacle penalty) and its gradient.

    With ``use_obstacle`` the residual is the complementarity form
    min(-R, V - payoff), which keeps the PDE active only where holding
    the option is optimal, and the obstacle penalty is two-sided:
    payoff <= V <= vcap, where ``vcap`` is a precomputed no-arbitrage
    upper bound. The complementarity form alone is satisfied by any
    state with a vanishing residual, even one far above the payoff;
    the cap rules those out where the PDE is only sparsely sampled.
    Returns (residual_term, obstacle_term), both unweighted means; the
    gradient accumulated into ``grad`` is the lam_r/lam_obs weighted sum.
    """
    n_layers = sizes.shape[0] - 1
    n = X.shape[0]

    cav = [X]
    cap = [P0]
    caq = [Q0]
    cau = [U0]
    # per hidden layer caches for the backward sweep
    zps = [P0]
    zqs = [Q0]
    zus = [U0]
    av, ap, aq, au = X, P0, Q0, U0
    pos = 0
    for l in range(n_layers):
        fi = sizes[l]
        fo = sizes[l + 1]
        W = flat[pos : pos + fo * fi].reshape(fo, fi)
        pos += fo * fi
        b = flat[pos : pos + fo]
        pos += fo
        zv = np.dot(av, W.T) + b
        zp = np.dot(ap, W.T)
        zq = np.dot(aq, W.T)
        zu = np.dot(au, W.T)
        if l < n_layers - 1:
            a = np.tanh(zv)
            d = 1.0 - a * a
            av = a
            ap = d * zp
            aq = d * zq - 2.0 * a * d * zp * zp
            au = d * zu
            zps.append(zp)
            zqs.append(zq)
            zus.append(zu)
        else:
            av, ap, aq, au = zv, zp, zq, zu
        cav.append(av)
        cap.append(ap)
        caq.append(aq)
        cau.append(au)

    V = cav[n_layers][:, 0]
    P = cap[n_layers][:, 0]
    Q = caq[n_layers][:, 0]
    U = cau[n_layers][:, 0]

    R = U + half_sig2 * S * S * Q + rate * S * P - rate * V

    if use_obstacle != 0:
        # obstacle problem: min(-R, V - payoff) = 0. Where holding is
        # optimal this enforces R = 0; where exercise binds it pins V to
        # the payoff instead of fighting the (negative) residual.
        gap = V - pay
        on_pde = -R <= gap
        C = np.where(on_pde, -R, gap)
        res_term = np.mean(C * C)
        viol = np.maximum(-gap, 0.0)
        over = np.maximum(V - vcap, 0.0)
        obs_term = np.mean(viol * viol) + np.mean(over * over)
        g = (2.0 * lam_r / n) * np.where(on_pde, R, 0.0)
        gV = (
            -rate * g
            + (2.0 * lam_r / n) * np.where(on_pde, 0.0, gap)
            - (2.0 * lam_obs / n) * viol
            + (2.0 * lam_obs / n) * over
        )
    else:
        res_term = np.mean(R * R)
        obs_term = 0.0
        g = (2.0 * lam_r / n) * R
        gV = -rate * g
    zbv = gV.reshape(n, 1)
    zbp = (rate * S * g).reshape(n, 1)
    zbq = (half_sig2 * S * S * g).reshape(n, 1)
    zbu = g.reshape(n, 1)

    for l in range(n_layers - 1, -1, -1):
        fi = sizes[l]
        fo = sizes[l + 1]
        pos -= fo * fi + fo
        off_w = pos
        off_b = pos + fo * fi
        W = flat[off_w : off_w + fo * fi].reshape(fo, fi)
        gW = (
            np.dot(zbv.T, cav[l])
            + np.dot(zbp.T, cap[l])
            + np.dot(zbq.T, caq[l])
            + np.dot(zbu.T, cau[l])
        )
        grad[off_w : off_w + fo * fi] += gW.ravel()
        grad[off_b : off_b + fo] += np.sum(zbv, axis=0)
        if l > 0:
            abv = np.dot(zbv, W)
            abp = np.dot(zbp, W)
            abq = np.dot(zbq, W)
            abu = np.dot(zbu, W)
            a = cav[l]
            d = 1.0 - a * a
            zp = zps[l]
            zq = zqs[l]
            zu = zus[l]
            zbq = abq * d
            zbu = abu * d
            zbp = abp * d - abq * (4.0 * a * d * zp)
            zbv = (
                abv * d
                - 2.0 * a * d * (abp * zp + abu * zu + abq * zq)
                - abq * (2.0 * zp * zp * d * (1.0 - 3.0 * a * a))
            )
    return res_term, obs_term


def psor_step(v, lower, diag, upper, rhs, obstacle, omega, tol, max_iter):
    """Projected SOR sweep-to-convergence for one tridiagonal system.

    Solves A v = rhs subject to v >= obstacle, where A has bands
    (lower, diag, upper). Returns the iteration count; v is updated in
    place. A count of -1 signals non-convergence.
    """
    m = v.shape[0]
    for it in range(max_iter):
        err = 0.0
        for i in range(m):
            acc = rhs[i]
            if i > 0:
                acc -= lower[i] * v[i - 1]
            if i < m - 1:
                acc -= upper[i] * v[i + 1]
            gs = acc / diag[i]
            new = v[i] + omega * (gs - v[i])
            if new < obstacle[i]:
                new = obstacle[i]
            dv = abs(new - v[i])
            if dv > err:
                err = dv
            v[i] = new
        if err < tol:
            return it + 1
    return -1


_PY_KERNELS = {
    "value_forward": value_forward,
    "derivs_forward": derivs_forward,
    "mse_loss_grad": mse_loss_grad,
    "interior_loss_grad": interior_loss_grad,
    "psor_step": psor_step,
}

NUMBA_ENABLED = False
if os.environ.get("BSPINN_NUMBA", "1") != "0":
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        NUMBA_ENABLED = True
        value_forward = njit(cache=True)(value_forward)
        derivs_forward = njit(cache=True)(derivs_forward)
        mse_loss_grad = njit(cache=True)(mse_loss_grad)
        interior_loss_grad = njit(cache=True)(interior_loss_grad)
        psor_step = njit(cache=True)(psor_step)

ACTIVE_KERNELS = {
    "value_forward": value_forward,
    "derivs_forward": derivs_forward,
    "mse_loss_grad": mse_loss_grad,
    "interior_loss_grad": interior_loss_grad,
    "psor_step": psor_step,
}
