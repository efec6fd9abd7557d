"""Manufactured solutions for the three benchmark interfaces.

All callables take ``(x, y, region)`` (region 1 or 2, array-like) except the
jump data ``q`` and ``g`` which live on the interface and take ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fem import ProblemData
from .geometry import LevelSet, Region, get_levelset

PI = np.pi


def _S(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _gradS(x, y):
    return np.stack([PI * np.cos(PI * x) * np.sin(PI * y), PI * np.sin(PI * x) * np.cos(PI * y)], axis=-1)


@dataclass
class ExactSolution:
    name: str
    levelset: LevelSet
    beta1: float
    beta2: float
    u: Callable
    grad: Callable
    f: Callable
    q: Callable
    g: Callable

    def beta(self, region) -> np.ndarray:
        return np.where(np.asarray(region) == Region.REGION1, self.beta1, self.beta2)

    def problem(self, g_mode: str = "nodal") -> ProblemData:
        return ProblemData(self.beta1, self.beta2, f=self.f, q=self.q, g=self.g, g_mode=g_mode, u_bc=self.u)


def example1(beta1: float, beta2: float, r: float = 0.5) -> ExactSolution:
    ls = get_levelset("circle", r=r)
    b = lambda reg: np.where(np.asarray(reg) == Region.REGION1, beta1, beta2)

    def u(x, y, reg):
        return ls(x, y) * _S(x, y) / b(reg)

    def grad(x, y, reg):
        phi = ls(x, y)
        gphi = np.stack([2 * x, 2 * y], axis=-1)
        return (gphi * _S(x, y)[..., None] + phi[..., None] * _gradS(x, y)) / b(reg)[..., None]

    def f(x, y, reg=None):
        # -div(beta grad u) = -(lap(phi) S + 2 grad(phi).grad(S) + phi lap(S))
        S = _S(x, y)
        mix = x * np.cos(PI * x) * np.sin(PI * y) + y * np.sin(PI * x) * np.cos(PI * y)
        return -(4 * S + 4 * PI * mix - 2 * PI ** 2 * ls(x, y) * S)

    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    return ExactSolution("example1", ls, beta1, beta2, u, grad, f, zero, zero)


def _shifted(name: str, ls: LevelSet, shift: float, beta1: float, beta2: float) -> ExactSolution:
    b = lambda reg: np.where(np.asarray(reg) == Region.REGION1, beta1, beta2)

    def u(x, y, reg):
        return _S(x, y) / b(reg) + np.where(np.asarray(reg) == Region.REGION2, shift, 0.0)

    def grad(x, y, reg):
        return _gradS(x, y) / b(reg)[..., None]

    def f(x, y, reg=None):
        return 2 * PI ** 2 * _S(x, y)

    def q(x, y):
        return (1.0 / beta1 - 1.0 / beta2) * _S(x, y) - shift

    g = lambda x, y: np.zeros(np.broadcast(x, y).shape)
    return ExactSolution(name, ls, beta1, beta2, u, grad, f, q, g)


def example2(beta1: float, beta2: float) -> ExactSolution:
    return _shifted("example2", get_levelset("cardioid"), 5.0, beta1, beta2)


def example3(beta1: float, beta2: float) -> ExactSolution:
    return _shifted("example3", get_levelset("fivestar-circle-radial"), 1.0, beta1, beta2)


_REGISTRY = {1: example1, 2: example2, 3: example3,
             "example1": example1, "example2": example2, "example3": example3}


def exact_registry() -> dict:
    return {k: v for k, v in _REGISTRY.items() if isinstance(k, int)}


def get_exact(example, beta1: float, beta2: float, **kw) -> ExactSolution:
    try:
        fn = _REGISTRY[example]
    except KeyError:
        raise KeyError(f"unknown example {example!r}") from None
    return fn(beta1, beta2, **kw)
