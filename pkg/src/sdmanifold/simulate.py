"""Sampled-data closed-loop simulation, trajectory replay and world-frame reconstruction."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cost import (CostSpec, ObjectiveSum, accumulate_objective, intersample_state_penalty,
                   stage_cost_sampled)
from .errors import InconsistencyError, InstabilityError, UnsupportedError
from .flow import FlowRequest, integrate_flow
from .hamiltonian import Trajectory
from .plant import PlantModel
from .synthesis import ControlLaw, eval_law

INSTABILITY_LIMIT = 1e6


@dataclass
class SimResult:
    """Sampled states x[0..K], held inputs u[0..K-1] and the intersample grid.

    ``grid_states[k, j]`` is the state at time k h + j h / M.
    """

    x: np.ndarray
    u: np.ndarray
    h: float
    M: int
    grid_states: np.ndarray
    cost_sampled: ObjectiveSum
    cost_intersample: ObjectiveSum
    stage_sampled: np.ndarray      # (K, 2): state and input part per period
    stage_intersample: np.ndarray  # (K, 2)
    terminal_estimate: float = float("nan")
    measured: np.ndarray | None = None
    plant_name: str = ""
    max_replay_error: float = 0.0

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    @property
    def penalty_split(self) -> dict:
        return {"sampled": (self.cost_sampled.state_part, self.cost_sampled.input_part),
                "intersample": (self.cost_intersample.state_part, self.cost_intersample.input_part)}

    def dense(self):
        """(t, states, inputs) on the full intersample grid without duplicated period ends."""
        K, M, h = self.steps, self.M, self.h
        if K == 0:
            return np.zeros(1), self.x[:1].copy(), np.zeros((1, self.u.shape[1]))
        t = (np.arange(K)[:, None] * h + np.arange(M)[None, :] * (h / M)).ravel()
        xs = self.grid_states[:, :M].reshape(K * M, -1)
        us = np.repeat(self.u, M, axis=0)
        t = np.append(t, K * h)
        xs = np.vstack([xs, self.grid_states[-1, M]])
        us = np.vstack([us, self.u[-1]])
        return t, xs, us

    def to_csv(self, path) -> None:
        t, xs, us = self.dense()
        n, m = xs.shape[1], us.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{a + 1}" for a in range(m)])
            for ti, xi, ui in zip(t, xs, us):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi] + [repr(float(v)) for v in ui])

    def costs_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "sampled_state", "sampled_input", "intersample_state", "intersample_input"])
            for k in range(self.steps):
                w.writerow([k] + [repr(float(v)) for v in self.stage_sampled[k]]
                           + [repr(float(v)) for v in self.stage_intersample[k]])


def _period(plant, spec, x, u):
    fl = integrate_flow(plant, FlowRequest(x, u, spec.h, spec.M, 0))
    return fl.phi


def _assemble(plant, spec, X, U, grids, S=None, measured=None, replay_err=0.0) -> SimResult:
    K = U.shape[0]
    st_s = np.zeros((K, 2))
    st_i = np.zeros((K, 2))
    for k in range(K):
        c = stage_cost_sampled(spec, X[k], U[k])
        st_s[k] = (c.state_part, c.input_part)
        st_i[k] = (intersample_state_penalty(spec, grids[k]), c.input_part)
    term = float(X[-1] @ S @ X[-1]) if S is not None else float("nan")
    n = plant.n
    return SimResult(
        x=X, u=U, h=spec.h, M=spec.M,
        grid_states=np.asarray(grids).reshape(K, spec.M + 1, n) if K else np.zeros((0, spec.M + 1, n)),
        cost_sampled=accumulate_objective(tuple(r) for r in st_s),
        cost_intersample=accumulate_objective(tuple(r) for r in st_i),
        stage_sampled=st_s, stage_intersample=st_i, terminal_estimate=term,
        measured=measured, plant_name=plant.name, max_replay_error=replay_err,
    )


def closed_loop(plant: PlantModel, spec: CostSpec, law: ControlLaw, x0, steps: int,
                meas_noise_std: float = 0.0, seed: int = 0, S: np.ndarray | None = None) -> SimResult:
    """Zero-order-hold loop u[k] = law(x[k] + noise); the true state evolves noise-free."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    n, m = plant.n, plant.m
    X = np.zeros((steps + 1, n))
    U = np.zeros((steps, m))
    meas = np.zeros((steps, n))
    grids = []
    X[0] = np.asarray(x0, dtype=float)
    for k in range(steps):
        noise = meas_noise_std * rng.standard_normal(n) if meas_noise_std > 0 else np.zeros(n)
        meas[k] = X[k] + noise
        U[k] = eval_law(law, meas[k])
        g = _period(plant, spec, X[k], U[k])
        grids.append(g)
        X[k + 1] = g[-1]
        if not np.all(np.isfinite(X[k + 1])) or np.linalg.norm(X[k + 1]) > INSTABILITY_LIMIT:
            raise InstabilityError(f"closed loop diverged at step {k + 1}", step=k + 1)
    return _assemble(plant, spec, X, U, grids, S=S, measured=meas)


def replay_trajectory(plant: PlantModel, spec: CostSpec, traj: Trajectory,
                      tol: float = 1e-6) -> SimResult:
    """Apply the trajectory's inputs open loop from x[0] and evaluate both objectives."""
    N = traj.N
    X = np.zeros_like(traj.x)
    X[0] = traj.x[0]
    grids = []
    for k in range(N):
        g = _period(plant, spec, X[k], traj.u[k])
        grids.append(g)
        X[k + 1] = g[-1]
    err = float(np.max(np.abs(X - traj.x))) if N else 0.0
    if err > tol:
        raise InconsistencyError(f"replayed states deviate from the trajectory by {err:.3e}")
    return _assemble(plant, spec, X, traj.u.copy(), grids, S=traj.S_used, replay_err=err)


# ---------------------------------------------------------------- world frame


@dataclass
class WorldPath:
    t: np.ndarray
    controlled: np.ndarray  # (T, 3): x_c, y_c, theta_c
    reference: np.ndarray   # (T, 3): x_r, y_r, theta_r
    sample_index: np.ndarray  # rows of t that are sampling instants

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "xc", "yc", "thetac"])
            for ti, (xc, yc, th) in zip(self.t, self.controlled):
                w.writerow([repr(float(ti)), repr(float(xc)), repr(float(yc)), repr(float(th))])


def error_coordinates(controlled, reference) -> np.ndarray:
    """(a, b, theta) of the reference robot seen from the controlled robot."""
    xc, yc, thc = controlled
    xr, yr, thr = reference
    c, s = np.cos(thc), np.sin(thc)
    return np.array([c * (xr - xc) + s * (yr - yc), -s * (xr - xc) + c * (yr - yc), thr - thc])


def reference_from_error(controlled, err) -> np.ndarray:
    xc, yc, thc = controlled
    a, b, th = err
    c, s = np.cos(thc), np.sin(thc)
    return np.array([xc + c * a - s * b, yc + s * a + c * b, thc + th])


def _pose_rhs(pose, v, w):
    return np.array([v * np.cos(pose[2]), v * np.sin(pose[2]), w])


def _rk4_pose(pose, v, w, h, M):
    out = [pose]
    dt = h / M
    for _ in range(M):
        g1 = _pose_rhs(pose, v, w)
        g2 = _pose_rhs(pose + 0.5 * dt * g1, v, w)
        g3 = _pose_rhs(pose + 0.5 * dt * g2, v, w)
        g4 = _pose_rhs(pose + dt * g3, v, w)
        pose = pose + (dt / 6.0) * (g1 + 2 * g2 + 2 * g3 + g4)
        out.append(pose)
    return np.array(out)


def world_frame_reconstruct(sim: SimResult, v_r: float, omega_r: float, initial_pose) -> WorldPath:
    """Integrate the controlled and the reference robot poses on the intersample grid.

    The controlled robot is driven by v_c = v_r - v, w_c = w_r - w held over
    each period; the reference starts where the initial error state puts it.
    """
    if sim.plant_name != "unicycle":
        raise UnsupportedError(f"world-frame reconstruction needs the unicycle plant, got '{sim.plant_name}'")
    h, M, K = sim.h, sim.M, sim.steps
    ctrl = np.asarray(initial_pose, dtype=float)
    ref = reference_from_error(ctrl, sim.x[0])
    C, Rf = [], []
    for k in range(K):
        v, w = sim.u[k]
        c_seg = _rk4_pose(ctrl, v_r - v, omega_r - w, h, M)
        r_seg = _rk4_pose(ref, v_r, omega_r, h, M)
        C.append(c_seg[:-1])
        Rf.append(r_seg[:-1])
        ctrl, ref = c_seg[-1], r_seg[-1]
    C.append(ctrl[None])
    Rf.append(ref[None])
    t = np.append((np.arange(K)[:, None] * h + np.arange(M)[None, :] * (h / M)).ravel(), K * h)
    return WorldPath(t, np.vstack(C), np.vstack(Rf), np.arange(K + 1) * M)
