"""Plant models: dynamics f(x, u) with analytic first and second derivatives.

Derivative layout used throughout the package::

    f_x[i, j]     = df_i / dx_j                  (n, n)
    f_u[i, a]     = df_i / du_a                  (n, m)
    f_xx[i, j, k] = d2f_i / dx_j dx_k            (n, n, n)
    f_xu[i, j, a] = d2f_i / dx_j du_a            (n, n, m)
    f_uu[i, a, b] = d2f_i / du_a du_b            (n, m, m)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ModelError

Array = np.ndarray


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned boxes for state, input and costate.

    Used for sampling and validation only; solvers never clip to them.
    """

    x_lo: Array
    x_hi: Array
    u_lo: Array
    u_hi: Array
    p_lo: Array
    p_hi: Array

    def __post_init__(self):
        for lo_name, hi_name in (("x_lo", "x_hi"), ("u_lo", "u_hi"), ("p_lo", "p_hi")):
            lo = np.asarray(getattr(self, lo_name), dtype=float)
            hi = np.asarray(getattr(self, hi_name), dtype=float)
            object.__setattr__(self, lo_name, lo)
            object.__setattr__(self, hi_name, hi)
            if lo.shape != hi.shape:
                raise ValueError(f"{lo_name}/{hi_name} shape mismatch")
            if not np.all(lo < hi):
                raise ValueError(f"{lo_name} must be < {hi_name} componentwise")
            if not (np.all(lo < 0) and np.all(hi > 0)):
                raise ValueError(f"origin must lie strictly inside [{lo_name}, {hi_name}]")

    @classmethod
    def symmetric(cls, n: int, m: int, x: float = 10.0, u: float = 10.0, p: float = 10.0) -> "DomainBox":
        return cls(-x * np.ones(n), x * np.ones(n), -u * np.ones(m), u * np.ones(m),
                   -p * np.ones(n), p * np.ones(n))

    def contains(self, x=None, u=None, p=None) -> bool:
        ok = True
        if x is not None:
            ok &= bool(np.all((self.x_lo < x) & (x < self.x_hi)))
        if u is not None:
            ok &= bool(np.all((self.u_lo < u) & (u < self.u_hi)))
        if p is not None:
            ok &= bool(np.all((self.p_lo < p) & (p < self.p_hi)))
        return ok


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time plant dx/dt = f(x, u) with analytic derivatives.

    Instances are immutable; every callable must be a pure function of (x, u).
    """

    n: int
    m: int
    f: Callable[[Array, Array], Array]
    f_x: Callable[[Array, Array], Array]
    f_u: Callable[[Array, Array], Array]
    f_xx: Callable[[Array, Array], Array]
    f_xu: Callable[[Array, Array], Array]
    f_uu: Callable[[Array, Array], Array]
    name: str = "custom"
    box: DomainBox | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.box is None:
            object.__setattr__(self, "box", DomainBox.symmetric(self.n, self.m))
        f0 = np.asarray(self.f(np.zeros(self.n), np.zeros(self.m)), dtype=float)
        if f0.shape != (self.n,):
            raise ModelError(f"f returned shape {f0.shape}, expected ({self.n},)")
        if np.max(np.abs(f0), initial=0.0) > 1e-12:
            raise ModelError(f"plant '{self.name}' does not satisfy f(0,0)=0: {f0}")

    def derivatives(self, x: Array, u: Array):
        """All of (f, f_x, f_u, f_xx, f_xu, f_uu) at one point."""
        return (self.f(x, u), self.f_x(x, u), self.f_u(x, u),
                self.f_xx(x, u), self.f_xu(x, u), self.f_uu(x, u))


@dataclass(frozen=True)
class LinearizedPlant:
    A: Array
    B: Array


def _check_dims(plant: PlantModel, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.n,):
        raise ValueError(f"state has shape {x.shape}, plant '{plant.name}' expects ({plant.n},)")
    if u.shape != (plant.m,):
        raise ValueError(f"input has shape {u.shape}, plant '{plant.name}' expects ({plant.m},)")
    return x, u


def eval_dynamics(plant: PlantModel, x, u) -> Array:
    x, u = _check_dims(plant, x, u)
    return np.asarray(plant.f(x, u), dtype=float)


def is_stabilizable(A: Array, B: Array, tol: float = 1e-9) -> bool:
    """Rank test on [A - lambda I, B] for every eigenvalue with Re(lambda) >= 0."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -tol:
            continue
        M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        if np.linalg.matrix_rank(M, tol=tol * max(1.0, np.linalg.norm(M))) < n:
            return False
    return True


def linearize_origin(plant: PlantModel) -> LinearizedPlant:
    z, w = np.zeros(plant.n), np.zeros(plant.m)
    f0 = np.asarray(plant.f(z, w), dtype=float)
    if np.max(np.abs(f0), initial=0.0) > 1e-12:
        raise ModelError(f"f(0,0) = {f0} is not zero")
    A = np.array(plant.f_x(z, w), dtype=float).reshape(plant.n, plant.n)
    B = np.array(plant.f_u(z, w), dtype=float).reshape(plant.n, plant.m)
    if not is_stabilizable(A, B):
        warnings.warn(f"linearization of '{plant.name}' at the origin is not stabilizable",
                      RuntimeWarning, stacklevel=2)
    return LinearizedPlant(A, B)


@dataclass
class DerivativeReport:
    """Max relative error of each analytic derivative against central differences."""

    f_x: float
    f_u: float
    f_xx: float
    f_xu: float
    f_uu: float
    samples: int

    @property
    def worst(self) -> float:
        return max(self.f_x, self.f_u, self.f_xx, self.f_xu, self.f_uu)

    def as_dict(self) -> dict:
        return {"f_x": self.f_x, "f_u": self.f_u, "f_xx": self.f_xx,
                "f_xu": self.f_xu, "f_uu": self.f_uu, "samples": self.samples}


def _rel_err(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(1.0, float(np.max(np.abs(numeric), initial=0.0)))
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def _central_diff(fun, z, step):
    """Jacobian of fun at z, stacked along the last axis."""
    cols = []
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = step
        cols.append((np.asarray(fun(z + e)) - np.asarray(fun(z - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def check_derivatives(plant: PlantModel, samples: int = 100, seed: int = 0) -> DerivativeReport:
    """Compare every analytic derivative with central finite differences.

    Points are drawn uniformly from the plant's domain box. Second derivatives
    are checked against differences of the analytic first derivatives.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    box = plant.box
    errs = dict.fromkeys(("f_x", "f_u", "f_xx", "f_xu", "f_uu"), 0.0)
    for _ in range(samples):
        x = rng.uniform(box.x_lo, box.x_hi)
        u = rng.uniform(box.u_lo, box.u_hi)
        sx = 1e-5 * max(1.0, np.linalg.norm(x))
        su = 1e-5 * max(1.0, np.linalg.norm(u))
        fd_x = _central_diff(lambda z: plant.f(z, u), x, sx)
        fd_u = _central_diff(lambda w: plant.f(x, w), u, su)
        fd_xx = _central_diff(lambda z: plant.f_x(z, u), x, sx)
        fd_xu = _central_diff(lambda w: plant.f_x(x, w), u, su)
        fd_uu = _central_diff(lambda w: plant.f_u(x, w), u, su)
        errs["f_x"] = max(errs["f_x"], _rel_err(plant.f_x(x, u), fd_x))
        errs["f_u"] = max(errs["f_u"], _rel_err(plant.f_u(x, u), fd_u))
        errs["f_xx"] = max(errs["f_xx"], _rel_err(plant.f_xx(x, u), fd_xx))
        errs["f_xu"] = max(errs["f_xu"], _rel_err(plant.f_xu(x, u), fd_xu))
        errs["f_uu"] = max(errs["f_uu"], _rel_err(plant.f_uu(x, u), fd_uu))
    return DerivativeReport(samples=samples, **errs)


# ---------------------------------------------------------------- built-ins


def builtin_linear(A0, B0, box: DomainBox | None = None) -> PlantModel:
    """dx/dt = A0 x + B0 u."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B0 = np.atleast_2d(np.asarray(B0, dtype=float))
    n, m = B0.shape
    if A0.shape != (n, n):
        raise ValueError(f"A0 shape {A0.shape} inconsistent with B0 shape {B0.shape}")
    zxx, zxu, zuu = np.zeros((n, n, n)), np.zeros((n, n, m)), np.zeros((n, m, m))
    A0.setflags(write=False)
    B0.setflags(write=False)
    return PlantModel(
        n=n, m=m,
        f=lambda x, u: A0 @ x + B0 @ u,
        f_x=lambda x, u: A0.copy(),
        f_u=lambda x, u: B0.copy(),
        f_xx=lambda x, u: zxx.copy(),
        f_xu=lambda x, u: zxu.copy(),
        f_uu=lambda x, u: zuu.copy(),
        name="linear", box=box,
        params={"A0": A0.tolist(), "B0": B0.tolist()},
    )


def builtin_integrator(box: DomainBox | None = None) -> PlantModel:
    """Scalar integrator dx/dt = u."""
    plant = builtin_linear([[0.0]], [[1.0]], box=box)
    return PlantModel(plant.n, plant.m, plant.f, plant.f_x, plant.f_u, plant.f_xx,
                      plant.f_xu, plant.f_uu, name="integrator", box=plant.box, params={})


def builtin_unicycle(v_r: float = 1.0, omega_r: float = 0.0, box: DomainBox | None = None) -> PlantModel:
    """Tracking-error dynamics of a wheeled robot following a reference robot.

    State (a, b, theta): position and heading of the reference robot in the
    frame of the controlled robot. Input (v, omega): reference minus
    controlled linear and angular velocities.
    """
    v_r = float(v_r)
    omega_r = float(omega_r)

    def f(x, u):
        a, b, th = x
        v, w = u
        return np.array([
            v_r * (np.cos(th) - 1.0) + b * omega_r + v - b * w,
            v_r * np.sin(th) - a * omega_r + a * w,
            w,
        ])

    def f_x(x, u):
        th = x[2]
        w = u[1]
        return np.array([
            [0.0, omega_r - w, -v_r * np.sin(th)],
            [w - omega_r, 0.0, v_r * np.cos(th)],
            [0.0, 0.0, 0.0],
        ])

    def f_u(x, u):
        a, b = x[0], x[1]
        return np.array([[1.0, -b], [0.0, a], [0.0, 1.0]])

    def f_xx(x, u):
        th = x[2]
        out = np.zeros((3, 3, 3))
        out[0, 2, 2] = -v_r * np.cos(th)
        out[1, 2, 2] = -v_r * np.sin(th)
        return out

    fxu = np.zeros((3, 3, 2))
    fxu[0, 1, 1] = -1.0
    fxu[1, 0, 1] = 1.0
    fxu.setflags(write=False)

    return PlantModel(
        n=3, m=2, f=f, f_x=f_x, f_u=f_u, f_xx=f_xx,
        f_xu=lambda x, u: fxu.copy(),
        f_uu=lambda x, u: np.zeros((3, 2, 2)),
        name="unicycle", box=box, params={"v_r": v_r, "omega_r": omega_r},
    )


def _only(params, allowed, name):
    extra = sorted(set(params) - set(allowed))
    if extra:
        raise ValueError(f"unknown parameter(s) for plant '{name}': {', '.join(extra)}")


def _make_integrator(params, box):
    _only(params, (), "integrator")
    return builtin_integrator(box=box)


def _make_linear(params, box):
    _only(params, ("A0", "B0"), "linear")
    return builtin_linear(params["A0"], params["B0"], box=box)


def _make_unicycle(params, box):
    _only(params, ("v_r", "omega_r"), "unicycle")
    return builtin_unicycle(params.get("v_r", 1.0), params.get("omega_r", 0.0), box=box)


PLANTS: dict[str, Callable[[dict, DomainBox | None], PlantModel]] = {
    "integrator": _make_integrator,
    "linear": _make_linear,
    "unicycle": _make_unicycle,
}


def make_plant(name: str, params: dict | None = None, box: DomainBox | None = None) -> PlantModel:
    """Build a registered plant by name."""
    try:
        factory = PLANTS[name]
    except KeyError:
        raise KeyError(f"unknown plant '{name}'; known: {sorted(PLANTS)}") from None
    return factory(dict(params or {}), box)
