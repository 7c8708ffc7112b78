"""Stage costs for the sampled and the intersample objectives.

Sampled stage cost:     h x'Qx + h u'Ru
Intersample stage cost: int_0^h phi(t)'Q phi(t) dt + h u'Ru

The intersample integral and its derivatives use the composite Simpson rule on
the RK4 grid, so the quadrature error is O(M^-4) like the integrator itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .flow import FlowRequest, FlowResult, integrate_flow
from .plant import PlantModel


class CostMode(str, Enum):
    SAMPLED = "sampled"
    INTERSAMPLE = "intersample"


@dataclass(frozen=True)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray
    h: float
    mode: CostMode = CostMode.SAMPLED
    M: int = 64

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "mode", CostMode(self.mode))
        if not np.allclose(Q, Q.T, atol=1e-14):
            raise ConfigError("Q must be symmetric")
        if not np.allclose(R, R.T, atol=1e-14):
            raise ConfigError("R must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ConfigError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0:
            raise ConfigError("R must be positive definite")
        if not self.h > 0:
            raise ConfigError("h must be positive")
        if self.M < 2 or self.M % 2:
            raise ConfigError(f"M must be an even integer >= 2, got {self.M}")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def intersample(self) -> bool:
        return self.mode is CostMode.INTERSAMPLE

    def with_mode(self, mode) -> "CostSpec":
        return CostSpec(self.Q, self.R, self.h, CostMode(mode), self.M)


@dataclass(frozen=True)
class StageCostEval:
    value: float
    grad_x: np.ndarray
    grad_u: np.ndarray
    hess_xx: np.ndarray | None
    hess_ux: np.ndarray
    hess_uu: np.ndarray
    state_part: float
    input_part: float


def simpson_weights(M: int, h: float) -> np.ndarray:
    """Composite Simpson weights on t_j = j h / M (endpoints 1, odd 4, even 2, times h/3M)."""
    if M < 2 or M % 2:
        raise ConfigError(f"Simpson rule needs an even M >= 2, got {M}")
    w = np.ones(M + 1)
    w[1:M:2] = 4.0
    w[2:M:2] = 2.0
    return w * (h / (3.0 * M))


def intersample_state_penalty(spec: CostSpec, phi_grid: np.ndarray) -> float:
    """Simpson value of int_0^h phi' Q phi dt from the M+1 grid states of one period."""
    w = simpson_weights(spec.M, spec.h)
    return float(w @ np.einsum("ji,ji->j", phi_grid, phi_grid @ spec.Q))


def stage_cost_sampled(spec: CostSpec, x, u) -> StageCostEval:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h, Q, R = spec.h, spec.Q, spec.R
    sp = h * float(x @ Q @ x)
    ip = h * float(u @ R @ u)
    return StageCostEval(
        value=sp + ip,
        grad_x=2 * h * (Q @ x),
        grad_u=2 * h * (R @ u),
        hess_xx=2 * h * Q,
        hess_ux=np.zeros((spec.m, spec.n)),
        hess_uu=2 * h * R,
        state_part=sp,
        input_part=ip,
    )


def stage_cost_intersample(plant: PlantModel, spec: CostSpec, x, u, flow: FlowResult,
                           want_hess_xx: bool = False) -> StageCostEval:
    """Intersample stage cost and its derivatives from a precomputed flow.

    ``flow`` must have been integrated from (x, u) with ``spec.h`` and ``spec.M``.
    Order-1 flows give value and gradients; Hessians need order 2, and
    ``hess_xx`` additionally needs the phi_xx blocks.
    """
    if spec.M % 2:
        raise ConfigError(f"intersample cost needs an even M, got {spec.M}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if (flow.M != spec.M or abs(flow.h - spec.h) > 1e-15 * max(1.0, spec.h)
            or not np.array_equal(flow.x0, x) or not np.array_equal(flow.u0, u)):
        raise ValueError("flow was not computed for this (x, u, h, M)")
    if flow.order < 1:
        raise ValueError("intersample cost needs an order >= 1 flow")
    if want_hess_xx and not flow.has_fxx:
        raise ValueError("hess_xx requested but flow has no phi_xx blocks")

    h, Q, R = spec.h, spec.Q, spec.R
    w = simpson_weights(spec.M, h)
    phi = flow.phi                      # (M+1, n)
    Qphi = phi @ Q                      # (M+1, n); Q symmetric
    sp = intersample_state_penalty(spec, phi)
    ip = h * float(u @ R @ u)
    grad_x = 2.0 * np.einsum("j,ji,jik->k", w, Qphi, flow.phi_x)
    grad_u = 2.0 * np.einsum("j,ji,jia->a", w, Qphi, flow.phi_u) + 2 * h * (R @ u)

    hess_ux = hess_uu = hess_xx = None
    if flow.order >= 2:
        QFx = Q @ flow.phi_x            # (M+1, n, n)
        QFu = Q @ flow.phi_u            # (M+1, n, m)
        hess_uu = 2.0 * (np.einsum("j,jia,jib->ab", w, flow.phi_u, QFu)
                         + np.einsum("j,ji,jiab->ab", w, Qphi, flow.phi_uu)) + 2 * h * R
        hess_ux = 2.0 * (np.einsum("j,jia,jik->ak", w, flow.phi_u, QFx)
                         + np.einsum("j,ji,jiak->ak", w, Qphi, flow.phi_ux))
        hess_uu = 0.5 * (hess_uu + hess_uu.T)
        if want_hess_xx:
            hess_xx = 2.0 * (np.einsum("j,jik,jil->kl", w, flow.phi_x, QFx)
                             + np.einsum("j,ji,jikl->kl", w, Qphi, flow.phi_xx))
            hess_xx = 0.5 * (hess_xx + hess_xx.T)
    return StageCostEval(sp + ip, grad_x, grad_u, hess_xx, hess_ux, hess_uu, sp, ip)


def stage_cost(plant: PlantModel, spec: CostSpec, x, u, flow: FlowResult | None = None,
               want_hess_xx: bool = False) -> StageCostEval:
    """Dispatch on ``spec.mode``; integrates the flow if needed and not given."""
    if not spec.intersample:
        return stage_cost_sampled(spec, x, u)
    if flow is None:
        flow = integrate_flow(plant, FlowRequest(x, u, spec.h, spec.M, 2, want_hess_xx))
    return stage_cost_intersample(plant, spec, x, u, flow, want_hess_xx)


@dataclass(frozen=True)
class ObjectiveSum:
    total: float
    state_part: float
    input_part: float


def accumulate_objective(stage_values) -> ObjectiveSum:
    """Sum stage costs.

    Items may be StageCostEval (which carry the state/input split), pairs
    ``(state_part, input_part)``, or bare floats. The split is NaN as soon as
    one bare float is seen.
    """
    total = sp = ip = 0.0
    split_known = True
    for item in stage_values:
        if isinstance(item, StageCostEval):
            s, i = item.state_part, item.input_part
        elif isinstance(item, tuple):
            s, i = item
        else:
            total += float(item)
            split_known = False
            continue
        total += s + i
        sp += s
        ip += i
    if not split_known:
        sp = ip = float("nan")
    return ObjectiveSum(total, sp, ip)
