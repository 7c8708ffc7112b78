"""Sample clouds of (x, u) on the stable manifold and polynomial feedback fits."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostSpec
from .errors import DivergenceError, EmptyCloudError, FitError, LinearSolveError, SdmError
from .hamiltonian import NewtonOptions, Trajectory
from .plant import PlantModel
from .riccati import LocalLQ, local_lq
from .shooting import ShootingOptions, seed_and_shoot

log = logging.getLogger(__name__)


@dataclass
class SampleCloud:
    X: np.ndarray
    U: np.ndarray
    target_idx: np.ndarray
    step: np.ndarray
    targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    failed: list = field(default_factory=list)

    def __len__(self):
        return self.X.shape[0]

    @property
    def pairs(self):
        return list(zip(self.X, self.U))

    @property
    def success_rate(self) -> float:
        total = len(self.targets)
        return 1.0 if total == 0 else 1.0 - len(self.failed) / total

    def to_csv(self, path) -> None:
        n, m = self.X.shape[1], self.U.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(n)] + [f"u{a + 1}" for a in range(m)]
                       + ["target_idx", "k"])
            for x, u, t, k in zip(self.X, self.U, self.target_idx, self.step):
                w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in u] + [int(t), int(k)])


def draw_targets(base_targets, noise_std: float, per_target: int, seed: int) -> np.ndarray:
    """Gaussian perturbations of each base target, one RNG stream per base index."""
    out = []
    for i, base in enumerate(np.atleast_2d(np.asarray(base_targets, dtype=float))):
        rng = np.random.default_rng([seed, i])
        out.append(base + noise_std * rng.standard_normal((per_target, base.size)))
    return np.concatenate(out, axis=0)


# Shared by forked workers: plants hold closures and do not pickle.
_CTX: dict = {}


def _shoot_one(idx: int):
    c = _CTX
    base = idx // c["per_target"]
    seed_traj = c["seeds"][base] if c["seeds"] is not None else None
    opts = c["opts"] if seed_traj is None else replace(c["opts"], continuation_steps=c["seeded_steps"])
    try:
        tr = seed_and_shoot(c["plant"], c["spec"], c["targets"][idx], c["N"], opts, c["newton"],
                            lq=c["lq"], terminal_radius=c["terminal_radius"], seed=seed_traj)
    except (SdmError, DivergenceError, LinearSolveError, np.linalg.LinAlgError) as exc:
        log.info("target %d failed: %s", idx, exc)
        return idx, None, None
    return idx, tr.x[:-1].copy(), tr.u.copy()


def generate_cloud(plant: PlantModel, spec: CostSpec, base_targets, noise_std: float,
                   per_target: int, seed: int, N: int,
                   shoot_opts: ShootingOptions = ShootingOptions(),
                   newton: NewtonOptions = NewtonOptions(), lq: LocalLQ | None = None,
                   seeds: list[Trajectory | None] | None = None, seeded_steps: int = 1,
                   terminal_radius: float = 1e-2, jobs: int = 1) -> SampleCloud:
    """Shoot to noisy copies of each base target and harvest every (x[k], u[k]).

    ``seeds[i]``, if given, is a manifold trajectory starting near base target i;
    shots for that base start from it with ``seeded_steps`` continuation stages
    instead of from a trajectory near the origin. Failed shots are skipped and
    listed in ``cloud.failed``.
    """
    if per_target < 1:
        raise ValueError("per_target must be >= 1")
    if lq is None:
        lq = local_lq(plant, spec)
    base_targets = np.atleast_2d(np.asarray(base_targets, dtype=float))
    targets = draw_targets(base_targets, noise_std, per_target, seed)
    if seeds is not None and len(seeds) != len(base_targets):
        raise ValueError("seeds must align with base_targets")
    _CTX.clear()
    _CTX.update(plant=plant, spec=spec, targets=targets, per_target=per_target, N=N,
                opts=shoot_opts, newton=newton, lq=lq, seeds=seeds, seeded_steps=seeded_steps,
                terminal_radius=terminal_radius)
    idxs = range(len(targets))
    if jobs > 1:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
            results = list(ex.map(_shoot_one, idxs))
    else:
        results = [_shoot_one(i) for i in idxs]
    _CTX.clear()

    X = [np.zeros((1, plant.n))]
    U = [np.zeros((1, plant.m))]
    T = [np.array([-1])]
    K = [np.array([0])]
    failed = []
    for idx, xs, us in sorted(results, key=lambda r: r[0]):
        if xs is None:
            failed.append(idx)
            continue
        X.append(xs)
        U.append(us)
        T.append(np.full(len(xs), idx))
        K.append(np.arange(len(xs)))
    if len(failed) == len(targets):
        raise EmptyCloudError(f"all {len(targets)} shots failed")
    return SampleCloud(np.vstack(X), np.vstack(U), np.concatenate(T), np.concatenate(K),
                       targets=targets, failed=failed)


# ---------------------------------------------------------------- polynomial law


def monomial_basis(n: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials of total degree 1..degree, graded order."""
    basis = []
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            basis.append(tuple(e))
    return basis


def design_matrix(X: np.ndarray, basis) -> np.ndarray:
    E = np.asarray(basis, dtype=int)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.prod(X[:, None, :] ** E[None, :, :], axis=2)


@dataclass(frozen=True)
class ControlLaw:
    degree: int
    basis: tuple
    coeffs: np.ndarray  # (m, len(basis))
    fit_residual: float = 0.0

    @property
    def state_dim(self) -> int:
        return len(self.basis[0]) if self.basis else 0

    @property
    def input_dim(self) -> int:
        return self.coeffs.shape[0]

    def linear_part(self) -> np.ndarray:
        """The m x n coefficient matrix of the degree-1 monomials."""
        n = self.state_dim
        L = np.zeros((self.input_dim, n))
        for col, e in enumerate(self.basis):
            if sum(e) == 1:
                L[:, e.index(1)] = self.coeffs[:, col]
        return L

    def to_dict(self) -> dict:
        return {"degree": self.degree, "state_dim": self.state_dim, "input_dim": self.input_dim,
                "basis": [list(e) for e in self.basis], "coeffs": self.coeffs.tolist(),
                "fit_residual": self.fit_residual}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ControlLaw":
        basis = tuple(tuple(int(v) for v in e) for e in d["basis"])
        coeffs = np.asarray(d["coeffs"], dtype=float).reshape(int(d["input_dim"]), len(basis))
        if any(sum(e) == 0 for e in basis):
            raise ValueError("control law basis must not contain a constant monomial")
        return cls(int(d["degree"]), basis, coeffs, float(d.get("fit_residual", 0.0)))

    @classmethod
    def from_json(cls, path) -> "ControlLaw":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_polynomial_law(cloud: SampleCloud, degree: int) -> ControlLaw:
    """Least squares per input channel on monomials of degree 1..degree (no constant)."""
    X, U = np.asarray(cloud.X, dtype=float), np.asarray(cloud.U, dtype=float)
    n, m = X.shape[1], U.shape[1]
    basis = monomial_basis(n, degree)
    if not np.any(X):
        if np.any(U):
            raise FitError("cloud has nonzero inputs at the origin")
        return ControlLaw(degree, tuple(basis), np.zeros((m, len(basis))), 0.0)
    if len(X) < len(basis):
        raise FitError(f"{len(X)} samples cannot determine {len(basis)} coefficients")
    Phi = design_matrix(X, basis)
    # column scaling keeps the rank test meaningful across degrees
    scale = np.linalg.norm(Phi, axis=0)
    scale[scale == 0] = 1.0
    _, sv, Vt = np.linalg.svd(Phi / scale, full_matrices=False)
    tol = sv[0] * max(Phi.shape) * np.finfo(float).eps
    if sv[-1] <= tol:
        weak = Vt[sv <= tol]
        names = sorted({basis[int(np.argmax(np.abs(v)))] for v in weak})
        raise FitError(f"design matrix is rank deficient; weakly determined monomials: {names}")
    C, *_ = np.linalg.lstsq(Phi / scale, U, rcond=None)
    coeffs = (C / scale[:, None]).T
    rms = float(np.sqrt(np.mean((Phi @ coeffs.T - U) ** 2)))
    return ControlLaw(degree, tuple(basis), coeffs, rms)


def eval_law(law: ControlLaw, x) -> np.ndarray:
    """u*(x); also accepts a (P, n) batch of states."""
    x = np.asarray(x, dtype=float)
    out = design_matrix(x, law.basis) @ law.coeffs.T
    return out[0] if x.ndim == 1 else out


def linear_law(K: np.ndarray) -> ControlLaw:
    """Degree-1 law u = -K x."""
    m, n = K.shape
    return ControlLaw(1, tuple(monomial_basis(n, 1)), -np.asarray(K, dtype=float).copy(), 0.0)
