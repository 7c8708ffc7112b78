"""Newton shooting on the terminal point so the traced trajectory starts at a target.

The sensitivity of x[0] to a perturbation of x[N] along the manifold tangent
(dx, 2 S dx) is the product H_0 ... H_{N-1} (I; 2S). Since the H_k mix
expanding and contracting directions, the product is kept as a cascade of thin
QR factorizations instead of being formed explicitly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .cost import CostSpec
from .errors import (DivergenceError, GeometryError, LinearSolveError, NewtonError,
                     ShootingError, StallError)
from .hamiltonian import NewtonOptions, Trajectory, backward_trajectory, linearized_backward_map
from .plant import PlantModel
from .riccati import LocalLQ, local_lq

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShootingOptions:
    target_tol: float = 1e-8
    max_updates: int = 30
    max_halvings: int = 30
    continuation_steps: int = 4
    # intermediate continuation targets: tolerance as a fraction of the increment length
    stage_tol: float = 0.3

    def __post_init__(self):
        if not self.target_tol > 0:
            raise ValueError("target_tol must be positive")
        if self.max_halvings < 1:
            raise ValueError("max_halvings must be >= 1")
        if self.max_updates < 1:
            raise ValueError("max_updates must be >= 1")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be >= 1")
        if not self.stage_tol > 0:
            raise ValueError("stage_tol must be positive")


@dataclass
class QrCascade:
    """Y[k], Z[k], R[k] for k = 0..N, plus the H_k they were built from."""

    Y: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    R: list = field(default_factory=list)
    H: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.R) - 1


def qr_nonneg(A: np.ndarray):
    """Thin QR with the diagonal of R made nonnegative."""
    Qm, Rm = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(Rm) < 0, -1.0, 1.0)
    return Qm * signs, signs[:, None] * Rm


def qr_cascade(plant: PlantModel, spec: CostSpec, traj: Trajectory) -> QrCascade:
    n = plant.n
    N = traj.N
    Ys, Zs, Rs, Hs = [None] * (N + 1), [None] * (N + 1), [None] * (N + 1), [None] * N
    Qm, Rm = qr_nonneg(np.vstack([np.eye(n), 2.0 * traj.S_used]))
    Ys[N], Zs[N], Rs[N] = Qm[:n], Qm[n:], Rm
    for k in range(N - 1, -1, -1):
        H = linearized_backward_map(plant, spec, traj.x[k], traj.u[k], traj.p[k + 1])
        Qm, Rm = qr_nonneg(H @ np.vstack([Ys[k + 1], Zs[k + 1]]))
        Ys[k], Zs[k], Rs[k], Hs[k] = Qm[:n], Qm[n:], Rm, H
    return QrCascade(Ys, Zs, Rs, Hs)


def cascade_solve(cascade: QrCascade, miss: np.ndarray) -> np.ndarray:
    """dx[N] = R_N^-1 ... R_0^-1 Y_0^-1 miss."""
    Y0 = cascade.Y[0]
    if np.linalg.cond(Y0) > 1e14:
        raise GeometryError("Y_0 is singular: the target direction is unreachable to first order")
    try:
        w = np.linalg.solve(Y0, miss)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("Y_0 is singular") from exc
    for Rk in cascade.R:
        if np.min(np.abs(np.diag(Rk))) == 0.0:
            raise GeometryError("singular triangular factor in QR cascade")
        w = solve_triangular(Rk, w, lower=False)
    return w


def _distance(traj, x_star):
    return float(np.linalg.norm(x_star - traj.x[0]))


def _retrace(plant, spec, traj, x_N, newton):
    try:
        return backward_trajectory(plant, spec, x_N, traj.N, newton, lq=traj.lq,
                                   terminal_radius=np.inf)
    except (NewtonError, LinearSolveError, DivergenceError) as exc:
        log.debug("retrace failed: %s", exc)
        return None


def shoot(plant: PlantModel, spec: CostSpec, traj: Trajectory, x_star,
          opts: ShootingOptions = ShootingOptions(), newton: NewtonOptions = NewtonOptions(),
          on_update=None) -> Trajectory:
    """Move x[N] until the traced trajectory starts within ``target_tol`` of ``x_star``.

    ``on_update(update, distance, halvings)`` is called after every accepted update.
    The returned trajectory carries the per-update log in ``meta["shoot_log"]``.
    """
    x_star = np.asarray(x_star, dtype=float)
    d = _distance(traj, x_star)
    history = [d]
    shoot_log = []
    for update in range(1, opts.max_updates + 1):
        if d <= opts.target_tol:
            break
        cascade = qr_cascade(plant, spec, traj)
        delta = cascade_solve(cascade, x_star - traj.x[0])
        scale = 1.0
        for halvings in range(opts.max_halvings + 1):
            cand = _retrace(plant, spec, traj, traj.x[-1] + scale * delta, newton)
            if cand is not None and _distance(cand, x_star) < d:
                break
            scale *= 0.5
        else:
            raise StallError(f"no improving step after {opts.max_halvings} halvings "
                             f"(distance {d:.3e})", history)
        traj = cand
        d = _distance(traj, x_star)
        history.append(d)
        shoot_log.append((update, d, halvings))
        log.info("update %d: distance %.3e, halvings %d", update, d, halvings)
        if on_update is not None:
            on_update(update, d, halvings)
    if d > opts.target_tol:
        raise ShootingError(f"distance {d:.3e} above tolerance after {opts.max_updates} updates",
                            history)
    traj.meta = dict(traj.meta)
    traj.meta["shoot_log"] = shoot_log
    traj.meta["distance"] = d
    return traj


def seed_terminal(lq: LocalLQ, x_target, N: int, terminal_radius: float) -> np.ndarray:
    """Terminal point predicted by the local LQ closed loop, capped at the terminal radius."""
    x_N = np.linalg.matrix_power(lq.solution.Acl, N) @ np.asarray(x_target, dtype=float)
    r = np.linalg.norm(x_N)
    if r > terminal_radius:
        x_N *= terminal_radius / r
    return x_N


def seed_and_shoot(plant: PlantModel, spec: CostSpec, x_star, N: int,
                   opts: ShootingOptions = ShootingOptions(), newton: NewtonOptions = NewtonOptions(),
                   lq: LocalLQ | None = None, terminal_radius: float = 1e-2,
                   seed: Trajectory | None = None, on_update=None) -> Trajectory:
    """Shoot to ``x_star`` through a continuation of intermediate targets.

    Without ``seed`` the path is x*_j = (j/steps) x*, starting from a trajectory
    whose terminal point is the linear closed-loop prediction for x*_1. With a
    seed trajectory, the path runs from its x[0] to x*.
    """
    x_star = np.asarray(x_star, dtype=float)
    if lq is None:
        lq = local_lq(plant, spec)
    steps = opts.continuation_steps
    if seed is None:
        start = np.zeros(plant.n)
        if not np.any(x_star):
            traj = backward_trajectory(plant, spec, np.zeros(plant.n), N, newton, lq=lq)
            traj.meta["shoot_log"] = []
            traj.meta["distance"] = 0.0
            return traj
        traj = backward_trajectory(plant, spec, seed_terminal(lq, x_star / steps, N, terminal_radius),
                                   N, newton, lq=lq, terminal_radius=np.inf)
    else:
        traj = seed
        start = seed.x[0].copy()
    full_log = []
    # intermediate targets only need to land close enough to seed the next stage
    increment = float(np.linalg.norm(x_star - start)) / steps
    loose = replace(opts, target_tol=max(opts.stage_tol * increment, opts.target_tol))
    for j in range(1, steps + 1):
        target = start + (j / steps) * (x_star - start)
        try:
            traj = shoot(plant, spec, traj, target, opts if j == steps else loose, newton,
                         on_update=on_update)
        except ShootingError as exc:
            exc.stage = j
            exc.args = (f"continuation stage {j}/{steps}: {exc.args[0]}",)
            raise
        full_log += [(j,) + entry for entry in traj.meta["shoot_log"]]
    traj.meta["shoot_log"] = full_log
    traj.meta["updates"] = len(full_log)
    return traj
