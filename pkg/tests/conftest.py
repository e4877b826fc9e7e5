"""Shared test fixtures: random smooth functions with known derivatives."""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

from sdrn.sparse_grid import SmoothFunction


class Component:
    """One-dimensional factor with an analytic second derivative."""

    def __init__(self, value, second):
        self.value = value
        self.second = second

    def l2_second(self) -> float:
        x, w = leggauss(40)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        return float(np.sqrt(np.sum(w * self.second(x) ** 2)))


def _sine(gen) -> Component:
    a = gen.uniform(0.5, 3.0)
    b = gen.uniform(0.0, 2.0 * np.pi)
    return Component(lambda x: np.sin(a * x + b), lambda x: -(a ** 2) * np.sin(a * x + b))


def _cubic(gen) -> Component:
    c = gen.uniform(-1.0, 1.0, 4)
    return Component(
        lambda x: c[0] + c[1] * x + c[2] * x ** 2 + c[3] * x ** 3,
        lambda x: 2.0 * c[2] + 6.0 * c[3] * x,
    )


def _bump(gen) -> Component:
    # vanishes at both endpoints: x(1-x)(a + b x)
    a, b = gen.uniform(-2.0, 2.0, 2)
    return Component(
        lambda x: x * (1.0 - x) * (a + b * x),
        lambda x: 2.0 * (b - a) - 6.0 * b * x,
    )


def _interior_sine(gen) -> Component:
    # sin(k pi x) with integer k vanishes at both endpoints
    k = int(gen.integers(1, 4))
    a = k * np.pi
    return Component(lambda x: np.sin(a * x), lambda x: -(a ** 2) * np.sin(a * x))


class ProductFunction:
    """Tensor product of 1-d components; all mixed seconds are analytic."""

    def __init__(self, comps: list[Component]):
        self.comps = comps
        self.dimension = len(comps)

    def value(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.ones(X.shape[0])
        for j, comp in enumerate(self.comps):
            out *= comp.value(X[:, j])
        return out

    def mixed_second(self, X: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.ones(X.shape[0])
        for j, comp in enumerate(self.comps):
            fn = comp.second if j in dims else comp.value
            out *= fn(X[:, j])
        return out

    def smooth(self) -> SmoothFunction:
        return SmoothFunction(
            dimension=self.dimension, value=self.value, mixed_second=self.mixed_second
        )

    def l2_norm_d2f(self) -> float:
        norm = 1.0
        for comp in self.comps:
            norm *= comp.l2_second()
        return norm


def random_product_function(gen, d: int, boundary_vanishing: bool = False) -> ProductFunction:
    makers = (_bump, _interior_sine) if boundary_vanishing else (_sine, _cubic, _bump)
    comps = [makers[int(gen.integers(0, len(makers)))](gen) for _ in range(d)]
    return ProductFunction(comps)
