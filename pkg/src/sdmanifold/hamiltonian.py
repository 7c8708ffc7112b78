"""Discrete Hamiltonian system of the sampled-data problem and its Newton solvers.

With stage cost L(x, u) (sampled or intersample), the Hamiltonian is

    H(x, u, p+) = phi_h(x, u)' p+ + L(x, u)

and the minimum principle reads

    x+ = phi_h(x, u),   0 = dH/du,   p = dH/dx.

Given (x+, p+), ``backward_step`` recovers (x, u, p); given (x, p),
``forward_step`` recovers (x+, u, p+). Chaining backward steps from a point
p[N] = 2 S x[N] near the origin traces the stable manifold.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cost import CostMode, CostSpec, StageCostEval, stage_cost_intersample, stage_cost_sampled
from .errors import LinearSolveError, NewtonError
from .flow import Endpoint, FlowRequest, FlowResult, integrate_flow
from .plant import PlantModel
from .riccati import LocalLQ, local_lq


class WarmStart(str, Enum):
    PREVIOUS_U = "previous_u"
    LINEAR_LQ = "linear_lq"


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-12
    max_iter: int = 50
    u_init_strategy: WarmStart = WarmStart.PREVIOUS_U

    def __post_init__(self):
        object.__setattr__(self, "u_init_strategy", WarmStart(self.u_init_strategy))
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class HamiltonianPoint:
    k: int
    x: np.ndarray
    u: np.ndarray | None
    p: np.ndarray


@dataclass
class StepStats:
    iterations: int
    residual: float
    hessian_pd: bool = True
    in_domain: bool = True


@dataclass
class Trajectory:
    """Samples (x[k], u[k], p[k]) of a stable-manifold trajectory, k = 0..N.

    ``u`` has N rows (no input at k = N).
    """

    x: np.ndarray
    u: np.ndarray
    p: np.ndarray
    mode: CostMode
    lq: LocalLQ
    newton_iters: np.ndarray
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def S_used(self) -> np.ndarray:
        return self.lq.S

    @property
    def points(self) -> list[HamiltonianPoint]:
        pts = [HamiltonianPoint(k, self.x[k], self.u[k], self.p[k]) for k in range(self.N)]
        pts.append(HamiltonianPoint(self.N, self.x[self.N], None, self.p[self.N]))
        return pts

    def tail(self, k0: int) -> "Trajectory":
        """The sub-trajectory starting at step k0 (still on the manifold)."""
        return Trajectory(self.x[k0:].copy(), self.u[k0:].copy(), self.p[k0:].copy(), self.mode,
                          self.lq, self.newton_iters[k0:].copy(), self.residuals[k0:].copy(),
                          dict(self.meta))


# ------------------------------------------------------------------ local data


@dataclass(frozen=True)
class LocalDerivatives:
    """Flow, stage cost and Hamiltonian derivatives at one (x, u, p+)."""

    flow: FlowResult
    end: Endpoint
    cost: StageCostEval
    H_u: np.ndarray
    H_uu: np.ndarray
    H_ux: np.ndarray
    H_xx: np.ndarray | None


def _stage(plant, spec, x, u, flow, want_xx):
    if spec.intersample:
        return stage_cost_intersample(plant, spec, x, u, flow, want_xx)
    return stage_cost_sampled(spec, x, u)


def _flow_for(plant, spec, x, u, want_xx):
    return integrate_flow(plant, FlowRequest(x, u, spec.h, spec.M, 2, want_xx))


def local_derivatives(plant: PlantModel, spec: CostSpec, x, u, p_plus,
                      flow: FlowResult | None = None, want_xx: bool = False) -> LocalDerivatives:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    if flow is None:
        flow = _flow_for(plant, spec, x, u, want_xx)
    end = flow.end()
    cost = _stage(plant, spec, x, u, flow, want_xx)
    H_u = end.phi_u.T @ p_plus + cost.grad_u
    H_uu = np.einsum("i,iab->ab", p_plus, end.phi_uu) + cost.hess_uu
    H_ux = np.einsum("i,iaj->aj", p_plus, end.phi_ux) + cost.hess_ux
    H_xx = None
    if want_xx:
        H_xx = np.einsum("i,ijk->jk", p_plus, end.phi_xx) + cost.hess_xx
    return LocalDerivatives(flow, end, cost, H_u, 0.5 * (H_uu + H_uu.T), H_ux, H_xx)


def hamiltonian_value(plant: PlantModel, spec: CostSpec, x, u, p_plus,
                      flow: FlowResult | None = None) -> float:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if flow is None:
        flow = integrate_flow(plant, FlowRequest(x, u, spec.h, spec.M, 1))
    cost = _stage(plant, spec, x, u, flow, False)
    return float(flow.end().phi @ np.asarray(p_plus, dtype=float) + cost.value)


def hessian_u(plant: PlantModel, spec: CostSpec, x, u, p_plus) -> np.ndarray:
    """Hessian of H in u; positive definiteness is the local convexity condition."""
    return local_derivatives(plant, spec, x, u, p_plus).H_uu


def _solve(J, r, what):
    try:
        out = np.linalg.solve(J, r)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"singular Newton matrix in {what}") from exc
    if not np.all(np.isfinite(out)):
        raise LinearSolveError(f"non-finite Newton step in {what}")
    return out


def _is_pd(M) -> bool:
    return bool(np.min(np.linalg.eigvalsh(M)) > 0)


# ------------------------------------------------------------------ steps


def lq_input(lq: LocalLQ, x) -> np.ndarray:
    """Linear optimal input -K x for the local LQ problem."""
    return -lq.K @ np.asarray(x, dtype=float)


def backward_step(plant: PlantModel, spec: CostSpec, x_plus, p_plus,
                  opts: NewtonOptions = NewtonOptions(), u_warm=None, lq: LocalLQ | None = None,
                  x_warm=None):
    """Solve x+ = phi_h(x, u), dH/du = 0 for (x, u) by Newton, then p = dH/dx.

    Newton starts from ``x_warm`` (default x+) and ``u_warm`` (default -K x+).
    Returns ``(x, u, p, stats)``.
    """
    x_plus = np.asarray(x_plus, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    n, m = plant.n, plant.m
    if u_warm is None or opts.u_init_strategy is WarmStart.LINEAR_LQ:
        if lq is None:
            lq = local_lq(plant, spec)
        u = lq_input(lq, x_plus)
    else:
        u = np.asarray(u_warm, dtype=float).copy()
    x = x_plus.copy() if x_warm is None else np.asarray(x_warm, dtype=float).copy()

    for it in range(opts.max_iter + 1):
        d = local_derivatives(plant, spec, x, u, p_plus)
        r = np.concatenate([d.end.phi - x_plus, d.H_u])
        res = float(np.max(np.abs(r)))
        if res <= opts.tol:
            break
        if it == opts.max_iter:
            raise NewtonError(f"backward step did not converge in {opts.max_iter} iterations "
                              f"(residual {res:.3e})", residual=res)
        J = np.block([[d.end.phi_x, d.end.phi_u], [d.H_ux, d.H_uu]])
        step = _solve(J, r, "backward step")
        x = x - step[:n]
        u = u - step[n:]

    p = d.end.phi_x.T @ p_plus + d.cost.grad_x
    stats = StepStats(it, res, _is_pd(d.H_uu), plant.box.contains(x, u, p))
    return x, u, p, stats


def forward_step(plant: PlantModel, spec: CostSpec, x, p,
                 opts: NewtonOptions = NewtonOptions(), u_warm=None, lq: LocalLQ | None = None):
    """Solve dH/du = 0, p = dH/dx for (u, p+) at fixed (x, p), then x+ = phi_h(x, u).

    Returns ``(x_plus, u, p_plus, stats)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n, m = plant.n, plant.m
    if lq is None:
        lq = local_lq(plant, spec)
    u = lq_input(lq, x) if u_warm is None else np.asarray(u_warm, dtype=float).copy()
    d = local_derivatives(plant, spec, x, u, np.zeros(n))
    p_plus = _solve(d.end.phi_x.T, p - d.cost.grad_x, "forward step initialization")

    for it in range(opts.max_iter + 1):
        d = local_derivatives(plant, spec, x, u, p_plus)
        r = np.concatenate([d.H_u, d.end.phi_x.T @ p_plus + d.cost.grad_x - p])
        res = float(np.max(np.abs(r)))
        if res <= opts.tol:
            break
        if it == opts.max_iter:
            raise NewtonError(f"forward step did not converge in {opts.max_iter} iterations "
                              f"(residual {res:.3e})", residual=res)
        J = np.block([[d.H_uu, d.end.phi_u.T], [d.H_ux.T, d.end.phi_x.T]])
        step = _solve(J, r, "forward step")
        u = u - step[:m]
        p_plus = p_plus - step[m:]

    stats = StepStats(it, res, _is_pd(d.H_uu), plant.box.contains(x, u, p))
    return d.end.phi.copy(), u, p_plus, stats


def backward_trajectory(plant: PlantModel, spec: CostSpec, x_N, N: int,
                        opts: NewtonOptions = NewtonOptions(), lq: LocalLQ | None = None,
                        terminal_radius: float = 1e-2, p_N=None) -> Trajectory:
    """Trace N backward steps of the Hamiltonian system from (x_N, 2 S x_N).

    Each step starts Newton from x+ and the previous step's input, so the
    result depends on x_N alone (not on any earlier trajectory).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if lq is None:
        lq = local_lq(plant, spec)
    x_N = np.asarray(x_N, dtype=float).reshape(plant.n)
    outside = bool(np.linalg.norm(x_N) > terminal_radius)
    if outside:
        warnings.warn(f"terminal state norm {np.linalg.norm(x_N):.3g} exceeds terminal radius "
                      f"{terminal_radius:g}", RuntimeWarning, stacklevel=2)
    X = np.zeros((N + 1, plant.n))
    P = np.zeros((N + 1, plant.n))
    U = np.zeros((N, plant.m))
    iters = np.zeros(N, dtype=int)
    resid = np.zeros(N)
    X[N] = x_N
    P[N] = 2.0 * lq.S @ x_N if p_N is None else np.asarray(p_N, dtype=float)
    hess_ok = True
    in_domain = True
    u_prev = None
    for k in range(N - 1, -1, -1):
        try:
            x, u, p, st = backward_step(plant, spec, X[k + 1], P[k + 1], opts, u_warm=u_prev, lq=lq)
        except NewtonError as exc:
            exc.step = k
            raise NewtonError(f"step k={k}: {exc}", residual=exc.residual, step=k) from exc
        except LinearSolveError as exc:
            raise LinearSolveError(f"step k={k}: {exc}") from exc
        X[k], U[k], P[k] = x, u, p
        iters[k], resid[k] = st.iterations, st.residual
        hess_ok &= st.hessian_pd
        in_domain &= st.in_domain
        u_prev = u
    meta = {"terminal_outside": outside, "hessian_pd": bool(hess_ok), "in_domain": bool(in_domain)}
    return Trajectory(X, U, P, spec.mode, lq, iters, resid, meta)


def linearized_backward_map(plant: PlantModel, spec: CostSpec, x, u, p_plus,
                            flow: FlowResult | None = None) -> np.ndarray:
    """The 2n x 2n matrix mapping (dx[k+1], dp[k+1]) to (dx[k], dp[k])."""
    n, m = plant.n, plant.m
    if flow is not None and not flow.has_fxx:
        raise ValueError("linearized backward map needs a flow with phi_xx")
    d = local_derivatives(plant, spec, x, u, p_plus, flow=flow, want_xx=True)
    Fx, Fu = d.end.phi_x, d.end.phi_u
    inner = np.block([[Fx, Fu], [d.H_ux, d.H_uu]])
    rhs = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((m, n)), -Fu.T]])
    Z = _solve(inner, rhs, "linearized backward map")
    top = np.hstack([np.eye(n), np.zeros((n, m))])
    bottom = np.hstack([d.H_xx, d.H_ux.T])
    H = np.vstack([top @ Z, bottom @ Z])
    H[n:, n:] += Fx.T
    return H


def symplectic_defect(H: np.ndarray) -> float:
    """max |H' J H - J| with J = [[0, I], [-I, 0]]."""
    n = H.shape[0] // 2
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return float(np.max(np.abs(H.T @ J @ H - J)))
