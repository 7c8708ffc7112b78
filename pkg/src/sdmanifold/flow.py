"""One-period flow map of the plant and its sensitivities, by classical RK4.

The state equation and the first/second-order variational equations are
stacked into one vector and advanced together, so every stage sees the same
trajectory point. Because RK4 is applied to the stacked system, the computed
sensitivities are the exact derivatives of the discrete RK4 map.

Tensor layout (leading grid axis omitted)::

    phi_x[i, j]     = d phi_i / dx_j
    phi_u[i, a]     = d phi_i / du_a
    phi_ux[i, a, j] = d2 phi_i / du_a dx_j
    phi_uu[i, a, b] = d2 phi_i / du_a du_b
    phi_xx[i, j, k] = d2 phi_i / dx_j dx_k
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .plant import PlantModel

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class FlowRequest:
    x0: np.ndarray
    u0: np.ndarray
    h: float
    M: int = 64
    order: int = 1
    want_fxx: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"sampling period must be positive, got {self.h}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if self.order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {self.order}")


@dataclass(frozen=True)
class Endpoint:
    """Flow quantities at a single time instant."""

    phi: np.ndarray
    phi_x: np.ndarray | None = None
    phi_u: np.ndarray | None = None
    phi_ux: np.ndarray | None = None
    phi_uu: np.ndarray | None = None
    phi_xx: np.ndarray | None = None


@dataclass(frozen=True)
class FlowResult:
    """Flow and sensitivities on the grid t_j = j h / M, j = 0..M."""

    x0: np.ndarray
    u0: np.ndarray
    h: float
    M: int
    order: int
    grid: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray | None = None
    phi_u: np.ndarray | None = None
    phi_ux: np.ndarray | None = None
    phi_uu: np.ndarray | None = None
    phi_xx: np.ndarray | None = None

    @property
    def has_fxx(self) -> bool:
        return self.phi_xx is not None

    def at(self, j: int) -> Endpoint:
        pick = lambda a: None if a is None else a[j]  # noqa: E731
        return Endpoint(self.phi[j], pick(self.phi_x), pick(self.phi_u),
                        pick(self.phi_ux), pick(self.phi_uu), pick(self.phi_xx))

    def end(self) -> Endpoint:
        return self.at(self.M)


def _layout(n, m, order, want_fxx):
    shapes = [("phi", (n,))]
    if order >= 1:
        shapes += [("phi_x", (n, n)), ("phi_u", (n, m))]
    if order >= 2:
        shapes += [("phi_ux", (n, m, n)), ("phi_uu", (n, m, m))]
        if want_fxx:
            shapes += [("phi_xx", (n, n, n))]
    slices = {}
    start = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        slices[name] = (slice(start, start + size), shape)
        start += size
    return slices, start


def stacked_dimension(n: int, m: int, order: int = 2, want_fxx: bool = False) -> int:
    return _layout(n, m, order, want_fxx)[1]


def _make_rhs(plant: PlantModel, u, slices, total):
    n, m = plant.n, plant.m
    order = 2 if "phi_ux" in slices else (1 if "phi_x" in slices else 0)
    with_xx = "phi_xx" in slices
    f_, fx_, fu_, fxx_, fxu_, fuu_ = plant.f, plant.f_x, plant.f_u, plant.f_xx, plant.f_xu, plant.f_uu
    if order == 0:
        return lambda y: np.asarray(f_(y, u), dtype=float)
    s_x, s_u = slices["phi_x"][0], slices["phi_u"][0]
    if order == 2:
        s_ux, s_uu = slices["phi_ux"][0], slices["phi_uu"][0]
    if with_xx:
        s_xx = slices["phi_xx"][0]

    def rhs(y):
        out = np.empty(total)
        phi = y[:n]
        fx = fx_(phi, u)
        Fx = y[s_x].reshape(n, n)
        Fu = y[s_u].reshape(n, m)
        fu = fu_(phi, u)
        out[:n] = f_(phi, u)
        out[s_x] = (fx @ Fx).ravel()
        out[s_u] = (fx @ Fu + fu).ravel()
        if order == 2:
            fxx = fxx_(phi, u)
            fxu = fxu_(phi, u)
            # G[i, l, a]: total derivative of f_x[i, l] along d/du_a
            G = fxx @ Fu + fxu
            out[s_ux] = (G.transpose(0, 2, 1) @ Fx).ravel() + (fx @ y[s_ux].reshape(n, m * n)).ravel()
            out[s_uu] = ((Fu.T @ G + fxu.transpose(0, 2, 1) @ Fu + fuu_(phi, u)).ravel()
                         + (fx @ y[s_uu].reshape(n, m * m)).ravel())
            if with_xx:
                out[s_xx] = ((fx @ y[s_xx].reshape(n, n * n)).ravel()
                             + (Fx.T @ fxx @ Fx).ravel())
        return out

    return rhs


def integrate_flow(plant: PlantModel, req: FlowRequest) -> FlowResult:
    """Integrate the flow over one sampling period with fixed-step RK4."""
    n, m = plant.n, plant.m
    x0 = np.asarray(req.x0, dtype=float).reshape(n)
    u0 = np.asarray(req.u0, dtype=float).reshape(m)
    slices, total = _layout(n, m, req.order, req.want_fxx)
    rhs = _make_rhs(plant, u0, slices, total)

    y = np.zeros(total)
    y[:n] = x0
    if req.order >= 1:
        y[slices["phi_x"][0]] = np.eye(n).ravel()

    M = req.M
    dt = req.h / M
    Y = np.empty((M + 1, total))
    Y[0] = y
    for j in range(M):
        g1 = rhs(y)
        g2 = rhs(y + 0.5 * dt * g1)
        g3 = rhs(y + 0.5 * dt * g2)
        g4 = rhs(y + dt * g3)
        y = y + (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"flow diverged at grid index {j + 1} of {M}", index=j + 1)
        Y[j + 1] = y

    parts = {}
    for name, (sl, shape) in slices.items():
        parts[name] = Y[:, sl].reshape((M + 1,) + shape)
    return FlowResult(x0=x0, u0=u0, h=float(req.h), M=M, order=req.order,
                      grid=np.arange(M + 1) * dt, **parts)


def flow_endpoint(plant: PlantModel, x, u, h: float, M: int = 64, order: int = 1,
                  want_fxx: bool = False) -> Endpoint:
    """The discretized plant map phi_h(x, u) and its sensitivities at t = h."""
    return integrate_flow(plant, FlowRequest(x, u, h, M, order, want_fxx)).end()
