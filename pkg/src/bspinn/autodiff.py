"""Scalar tape autodiff and second-order forward-mode carriers.

Two pieces live here:

* ``Node`` -- a reverse-mode tape built as a dynamic computational graph.
  Used to get gradients of a scalar loss w.r.t. every parameter leaf.
* ``Quad`` -- a forward-mode carrier holding (value, d/dS, d2/dS2, d/dt).
  Threading ``Quad`` values through a network forward pass yields the
  price surface derivatives needed by the PDE residual.

The two compose: evaluating a network on ``Quad`` objects whose components
are ``Node`` leaves gives reverse-mode gradients of expressions that
contain second input derivatives (forward-over-reverse), without ever
materializing a third-order graph.

This module is the slow, obviously-correct reference path. The vectorized
training kernels in :mod:`bspinn.kernels` are checked against it.
"""

from __future__ import annotations

import math


class Node:
    """One tape entry: a value, its parents and the local chain rule."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = float(value)
        self.grad = 0.0
        self._parents = parents
        self._backward = backward

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Node) else Node(x)

    def __add__(self, other):
        if not isinstance(other, (Node, int, float)):
            return NotImplemented  # let Quad handle mixed arithmetic
        other = Node._lift(other)
        out = Node(self.value + other.value, (self, other))

        def _backward():
            self.grad += out.grad
            other.grad += out.grad

        out._backward = _backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        if not isinstance(other, (Node, int, float)):
            return NotImplemented
        other = Node._lift(other)
        out = Node(self.value * other.value, (self, other))

        def _backward():
            self.grad += out.grad * other.value
            other.grad += out.grad * self.value

        out._backward = _backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = Node(-self.value, (self,))

        def _backward():
            self.grad -= out.grad

        out._backward = _backward
        return out

    def __sub__(self, other):
        if not isinstance(other, (Node, int, float)):
            return NotImplemented
        return self + (-Node._lift(other))

    def __rsub__(self, other):
        return Node._lift(other) + (-self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("Node ** only supports integer exponents")
        out = Node(self.value**n, (self,))

        def _backward():
            self.grad += out.grad * n * self.value ** (n - 1)

        out._backward = _backward
        return out

    def __truediv__(self, other):
        return self * Node._lift(other) ** -1

    def __rtruediv__(self, other):
        return Node._lift(other) * self**-1

    def tanh(self):
        t = math.tanh(self.value)
        out = Node(t, (self,))

        def _backward():
            self.grad += out.grad * (1.0 - t * t)

        out._backward = _backward
        return out

    def exp(self):
        e = math.exp(self.value)
        out = Node(e, (self,))

        def _backward():
            self.grad += out.grad * e

        out._backward = _backward
        return out

    def log(self):
        if self.value <= 0.0:
            raise ValueError(f"log requires a positive argument, got {self.value}")
        out = Node(math.log(self.value), (self,))

        def _backward():
            self.grad += out.grad / self.value

        out._backward = _backward
        return out

    def backward(self):
        """Reverse accumulation from this (scalar) node."""
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = 1.0
        for node in reversed(order):
            if node._backward is not None:
                node._backward()


def grad_params(loss, params):
    """Gradient of a scalar ``loss`` Node w.r.t. a list of leaf Nodes."""
    for p in params:
        p.grad = 0.0
    loss.backward()
    return [p.grad for p in params]


class Quad:
    """Forward-mode carrier (value, d/dS, d2/dS2, d/dt).

    Seed the spot input with ds=1 and the time input with dt=1; every
    arithmetic op propagates all four slots, so the network output carries
    exact first/second spot derivatives and the first time derivative.
    Components may be floats or Nodes (forward-over-reverse).
    """

    __slots__ = ("v", "ds", "dss", "dt")

    def __init__(self, v, ds=0.0, dss=0.0, dt=0.0):
        self.v = v
        self.ds = ds
        self.dss = dss
        self.dt = dt

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Quad) else Quad(x)

    def __add__(self, other):
        o = Quad._lift(other)
        return Quad(self.v + o.v, self.ds + o.ds, self.dss + o.dss, self.dt + o.dt)

    __radd__ = __add__

    def __neg__(self):
        return Quad(-self.v, -self.ds, -self.dss, -self.dt)

    def __sub__(self, other):
        return self + (-Quad._lift(other))

    def __rsub__(self, other):
        return Quad._lift(other) + (-self)

    def __mul__(self, other):
        o = Quad._lift(other)
        return Quad(
            self.v * o.v,
            self.ds * o.v + self.v * o.ds,
            self.dss * o.v + 2.0 * self.ds * o.ds + self.v * o.dss,
            self.dt * o.v + self.v * o.dt,
        )

    __rmul__ = __mul__

    def _chain(self, f, f1, f2):
        # f(u): value f, first derivative f1, second derivative f2 at u=self.v
        return Quad(
            f,
            f1 * self.ds,
            f1 * self.dss + f2 * self.ds * self.ds,
            f1 * self.dt,
        )

    def tanh(self):
        t = _tanh(self.v)
        f1 = 1.0 - t * t
        return self._chain(t, f1, -2.0 * t * f1)

    def exp(self):
        e = _exp(self.v)
        return self._chain(e, e, e)

    def log(self):
        lg = _log(self.v)
        inv = 1.0 / self.v
        return self._chain(lg, inv, -inv * inv)


def _tanh(x):
    return x.tanh() if isinstance(x, Node) else math.tanh(x)


def _exp(x):
    return x.exp() if isinstance(x, Node) else math.exp(x)


def _log(x):
    return x.log() if isinstance(x, Node) else math.log(x)
