"""Built-in coefficient, driver, terminal, obstacle and measure families.

Configuration files refer to these by name with keyword parameters.
Every factory returns immutable data objects from :mod:`bsdelab.core`.
"""

from __future__ import annotations

import inspect
from typing import Callable

import numpy as np

from .core import DiffusionSpec, DriverSpec, MeasureData


def _x0(x):
    return np.asarray(x, dtype=float).reshape(np.shape(x)[0], -1)[:, 0]


def _rsq(x):
    x = np.asarray(x, dtype=float)
    return np.sum(x.reshape(x.shape[0], -1) ** 2, axis=1)


# --------------------------------------------------------------------------
# diffusions


def diffusion_constant(a=1.0, b=0.0, dim=1):
    return DiffusionSpec.constant(a, b, dim)


def diffusion_affine(a=1.0, b0=0.0, b1=0.0, dim=1):
    return DiffusionSpec.affine(a, b0, b1, dim)


def diffusion_trigonometric(c0=1.0, c1=0.5, omega=1.0, b0=0.0, b1=0.0):
    return DiffusionSpec.trigonometric(c0, c1, omega, b0, b1)


DIFFUSIONS = {
    "constant": diffusion_constant,
    "affine": diffusion_affine,
    "trigonometric": diffusion_trigonometric,
}


# --------------------------------------------------------------------------
# driver pieces; each f factory returns (f, gamma_bound, K, L)


def f_zero():
    return (lambda t, x, y, z: np.zeros_like(y)), (lambda t, x: np.zeros(x.shape[0])), 1.0, 0.0


def f_linear(r=1.0, c=0.0):
    """``f = c - r y``."""
    K = max(abs(r), 1.0)
    return ((lambda t, x, y, z: c - r * y), (lambda t, x: np.full(x.shape[0], abs(c) / K)), K, abs(r))


def f_linear_z(r=0.0, kz=0.5, c=0.0):
    """``f = c - r y + kz |z|``; Lipschitz but not linear in ``z``."""
    K = max(abs(r), abs(kz), 1.0)

    def f(t, x, y, z):
        return c - r * y + kz * np.sqrt(np.sum(np.asarray(z).reshape(y.shape[0], -1) ** 2, axis=1))

    return f, (lambda t, x: np.full(x.shape[0], abs(c) / K)), K, abs(r) + abs(kz)


def f_sqrt_cap(cap=1.0):
    """``f = min(sqrt(y^+), cap)``; continuous, not Lipschitz at 0."""
    def f(t, x, y, z):
        return np.minimum(np.sqrt(np.maximum(y, 0.0)), cap)

    return f, (lambda t, x: np.full(x.shape[0], max(cap, 1.0))), 1.0, None


def f_bump(amp=1.0, r=0.5):
    """``f = amp cos(x) - r y``, smooth and bounded in ``x``."""
    K = max(abs(r), 1.0)
    return ((lambda t, x, y, z: amp * np.cos(_x0(x)) - r * y),
            (lambda t, x: np.full(x.shape[0], abs(amp) / K)), K, abs(r))


F_FAMILIES = {
    "zero": f_zero,
    "linear": f_linear,
    "linear_z": f_linear_z,
    "sqrt_cap": f_sqrt_cap,
    "bump": f_bump,
}


def g_zero():
    return (lambda t, x, y: np.zeros_like(y)), 1.0, 0.0


def g_constant(c=1.0):
    return (lambda t, x, y: np.full_like(y, float(c))), max(abs(c), 1e-300), 0.0


def g_bounded_linear(c=1.0, r=0.5):
    """``g = c - r * clip(y, -1, 1)``, bounded by ``|c| + |r|``."""
    return (lambda t, x, y: c - r * np.clip(y, -1.0, 1.0)), abs(c) + abs(r), abs(r)


G_FAMILIES = {
    "zero": g_zero,
    "constant": g_constant,
    "bounded_linear": g_bounded_linear,
}


def phi_zero():
    return lambda x: np.zeros(np.shape(x)[0])


def phi_constant(c=1.0):
    return lambda x: np.full(np.shape(x)[0], float(c))


def phi_gaussian(width=1.0, height=1.0):
    return lambda x: height * np.exp(-_rsq(x) / (2.0 * width ** 2))


def phi_cos(omega=1.0):
    return lambda x: np.cos(omega * _x0(x))


def phi_put(strike=1.0):
    return lambda x: np.maximum(strike - _x0(x), 0.0)


def phi_call(strike=1.0):
    return lambda x: np.maximum(_x0(x) - strike, 0.0)


TERMINALS = {
    "zero": phi_zero,
    "constant": phi_constant,
    "gaussian": phi_gaussian,
    "cos": phi_cos,
    "put": phi_put,
    "call": phi_call,
}


def make_driver(f=None, g=None, terminal=None, name: str = "driver") -> DriverSpec:
    """Assemble a :class:`DriverSpec` from ``{"family": ..., **params}`` dicts."""
    f = dict(f or {"family": "zero"})
    g = dict(g or {"family": "zero"})
    terminal = dict(terminal or {"family": "zero"})
    fn, gamma, K, Lf = _call(F_FAMILIES, f, "f")
    gn, M, Lg = _call(G_FAMILIES, g, "g")
    phi = _call(TERMINALS, terminal, "terminal")
    L = None if Lf is None else max(Lf, Lg)
    return DriverSpec(fn, gn, phi, gamma, const_K=K, const_M=M, const_L=L, name=name)


# --------------------------------------------------------------------------
# obstacles h(t, x) and measures


def obstacle_linear_barrier(c=1.0, T=1.0):
    """Space-independent ``h = c (T - t)``."""
    return lambda t, x: np.full(np.shape(x)[0], c * (T - t))


def obstacle_put(strike=1.0):
    return lambda t, x: np.maximum(strike - _x0(x), 0.0)


def obstacle_bump(height=0.5, width=0.5, center=0.0, T=1.0):
    """``h = height (T - t) exp(-(x - center)^2 / (2 width^2))`` vanishing at ``T``."""
    return lambda t, x: height * (T - t) * np.exp(-(_x0(x) - center) ** 2 / (2 * width ** 2))


OBSTACLES = {
    "linear_barrier": obstacle_linear_barrier,
    "put": obstacle_put,
    "bump": obstacle_bump,
}


def measure_zero():
    return MeasureData.zero()


def measure_constant(c=1.0):
    return MeasureData.constant(c)


def measure_gaussian(c=1.0, width=1.0):
    """Density ``q = c exp(-|x|^2 / width^2)``."""
    if c < 0:
        raise ValueError("measure density must be nonnegative")
    return MeasureData(lambda t, x: c * np.exp(-_rsq(x) / width ** 2), name=f"gaussian({c},{width})")


MEASURES = {
    "zero": measure_zero,
    "constant": measure_constant,
    "gaussian": measure_gaussian,
}


# --------------------------------------------------------------------------
# lookup


def _call(table: dict, params: dict, what: str):
    params = dict(params)
    fam = params.pop("family", None)
    if fam not in table:
        raise KeyError(f"unknown {what} family {fam!r}; choose from {sorted(table)}")
    factory = table[fam]
    allowed = set(inspect.signature(factory).parameters)
    extra = set(params) - allowed
    if extra:
        raise KeyError(f"{what} family {fam!r} takes no parameter(s) {sorted(extra)}; allowed {sorted(allowed)}")
    return factory(**params)


def make_diffusion(params: dict) -> DiffusionSpec:
    return _call(DIFFUSIONS, params, "diffusion")


def make_obstacle(params) -> Callable | None:
    if params is None:
        return None
    return _call(OBSTACLES, params, "obstacle")


def make_measure(params) -> MeasureData | None:
    if params is None:
        return None
    return _call(MEASURES, params, "measure")


def family_parameters(table: dict, family: str) -> list:
    return list(inspect.signature(table[family]).parameters)


TABLES = {
    "diffusion": DIFFUSIONS,
    "f": F_FAMILIES,
    "g": G_FAMILIES,
    "terminal": TERMINALS,
    "obstacle": OBSTACLES,
    "measure": MEASURES,
}
