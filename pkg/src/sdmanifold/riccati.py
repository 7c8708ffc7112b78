"""Linearization over one period and the stabilizing discrete Riccati solution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostSpec, simpson_weights
from .errors import ConfigError, RiccatiError, StabilizationError
from .flow import FlowRequest, integrate_flow
from .plant import PlantModel


@dataclass(frozen=True)
class DiscretizedLinear:
    A_h: np.ndarray
    B_h: np.ndarray
    h: float


@dataclass(frozen=True)
class IntersampleWeights:
    Qbar: np.ndarray
    Wbar: np.ndarray
    Rbar: np.ndarray


@dataclass(frozen=True)
class RiccatiSolution:
    S: np.ndarray
    K: np.ndarray
    Acl: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.Acl))))

    def as_dict(self) -> dict:
        return {"S": self.S.tolist(), "K": self.K.tolist(),
                "spectral_radius": self.spectral_radius, "residual": self.residual,
                "iterations": self.iterations}


def discretize_linear(plant: PlantModel, h: float, M: int = 64) -> DiscretizedLinear:
    """A_h, B_h as the sensitivities of the RK4 flow map at the origin."""
    end = integrate_flow(plant, FlowRequest(np.zeros(plant.n), np.zeros(plant.m), h, M, 1)).end()
    return DiscretizedLinear(end.phi_x.copy(), end.phi_u.copy(), float(h))


def intersample_weights(plant: PlantModel, spec: CostSpec, M: int | None = None) -> IntersampleWeights:
    """Simpson quadrature of int_0^h [A_t B_t]' Q [A_t B_t] dt, plus hR on the input block."""
    M = spec.M if M is None else M
    if M % 2:
        raise ConfigError(f"intersample weights need an even M, got {M}")
    fl = integrate_flow(plant, FlowRequest(np.zeros(plant.n), np.zeros(plant.m), spec.h, M, 1))
    w = simpson_weights(M, spec.h)
    At, Bt, Q = fl.phi_x, fl.phi_u, spec.Q
    Qbar = np.einsum("j,jik,il,jlm->km", w, At, Q, At)
    Wbar = np.einsum("j,jik,il,jla->ka", w, At, Q, Bt)
    Rbar = np.einsum("j,jia,il,jlb->ab", w, Bt, Q, Bt) + spec.h * spec.R
    return IntersampleWeights(0.5 * (Qbar + Qbar.T), Wbar, 0.5 * (Rbar + Rbar.T))


def dare_residual(A, B, Qd, Rd, Wd, S) -> np.ndarray:
    G = B.T @ S @ A + Wd.T
    return A.T @ S @ A - S + Qd - G.T @ np.linalg.solve(B.T @ S @ B + Rd, G)


def _gain(A, B, Rd, Wd, S):
    return np.linalg.solve(B.T @ S @ B + Rd, B.T @ S @ A + Wd.T)


def _riccati_step(A, B, Qd, Rd, Wd, S):
    G = B.T @ S @ A + Wd.T
    S_new = A.T @ S @ A + Qd - G.T @ np.linalg.solve(B.T @ S @ B + Rd, G)
    return 0.5 * (S_new + S_new.T)


def _newton_refine(A, B, Qd, Rd, Wd, S):
    """One Hewer step: Lyapunov solve for the value of the current gain."""
    n = A.shape[0]
    K = _gain(A, B, Rd, Wd, S)
    Acl = A - B @ K
    C = Qd - Wd @ K - K.T @ Wd.T + K.T @ Rd @ K
    lhs = np.eye(n * n) - np.kron(Acl.T, Acl.T)
    S_new = np.linalg.solve(lhs, C.ravel()).reshape(n, n)
    return 0.5 * (S_new + S_new.T)


def solve_dare(dl: DiscretizedLinear, Qd, Rd, Wd=None, rel_tol: float = 1e-13,
               max_iter: int = 1_000_000) -> RiccatiSolution:
    """Stabilizing solution of the cross-weighted DARE

        A'SA - S + Qd - (A'SB + Wd)(B'SB + Rd)^-1 (B'SA + Wd') = 0

    by backward Riccati iteration from S = 0 followed by one Newton refinement.
    """
    A, B = np.asarray(dl.A_h, dtype=float), np.asarray(dl.B_h, dtype=float)
    n, m = B.shape
    Qd = np.atleast_2d(np.asarray(Qd, dtype=float))
    Rd = np.atleast_2d(np.asarray(Rd, dtype=float))
    Wd = np.zeros((n, m)) if Wd is None else np.atleast_2d(np.asarray(Wd, dtype=float)).reshape(n, m)

    S = np.zeros((n, n))
    history = []
    for it in range(1, max_iter + 1):
        S_new = _riccati_step(A, B, Qd, Rd, Wd, S)
        change = np.linalg.norm(S_new - S)
        scale = np.linalg.norm(S_new)
        S = S_new
        if not np.all(np.isfinite(S)):
            raise RiccatiError("Riccati iteration produced non-finite values", history)
        if it % 1000 == 0:
            history.append(float(np.linalg.norm(dare_residual(A, B, Qd, Rd, Wd, S))))
        if change <= rel_tol * scale or scale == 0.0:
            break
    else:
        history.append(float(np.linalg.norm(dare_residual(A, B, Qd, Rd, Wd, S))))
        raise RiccatiError(f"Riccati iteration did not converge in {max_iter} steps", history)

    res = float(np.linalg.norm(dare_residual(A, B, Qd, Rd, Wd, S)))
    try:
        S_ref = _newton_refine(A, B, Qd, Rd, Wd, S)
        res_ref = float(np.linalg.norm(dare_residual(A, B, Qd, Rd, Wd, S_ref)))
        if res_ref < res:
            S, res = S_ref, res_ref
    except np.linalg.LinAlgError:
        pass

    K = _gain(A, B, Rd, Wd, S)
    Acl = A - B @ K
    sol = RiccatiSolution(S=S, K=K, Acl=Acl, residual=res, iterations=it)
    if sol.spectral_radius >= 1.0:
        raise StabilizationError(
            f"Riccati solution is not stabilizing (spectral radius {sol.spectral_radius:.6g})", history)
    return sol


@dataclass(frozen=True)
class LocalLQ:
    """Everything the nonlinear solvers need from the linearization at the origin."""

    dl: DiscretizedLinear
    Qd: np.ndarray
    Rd: np.ndarray
    Wd: np.ndarray
    solution: RiccatiSolution

    @property
    def S(self) -> np.ndarray:
        return self.solution.S

    @property
    def K(self) -> np.ndarray:
        return self.solution.K


def local_lq(plant: PlantModel, spec: CostSpec) -> LocalLQ:
    """Riccati data for ``spec.mode``: (hQ, hR, 0) when sampled, (Qbar, Rbar, Wbar) when intersample."""
    dl = discretize_linear(plant, spec.h, spec.M)
    if spec.intersample:
        wts = intersample_weights(plant, spec)
        Qd, Rd, Wd = wts.Qbar, wts.Rbar, wts.Wbar
    else:
        Qd, Rd, Wd = spec.h * spec.Q, spec.h * spec.R, np.zeros((plant.n, plant.m))
    return LocalLQ(dl, Qd, Rd, Wd, solve_dare(dl, Qd, Rd, Wd))
