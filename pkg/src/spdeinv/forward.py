"""Monte Carlo simulation of the truncated Galerkin system.

Each path ``p`` draws its Gaussian increments from a Philox generator keyed
by a hash of ``(master_seed, p)``, so a path's noise does not depend on how
paths are chunked or distributed over threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec
from .errors import DivergenceError, ParameterError
from .noise import QSpec, check_wellposed
from .tensor import sym_pairs

SCHEMES = ("exponential_euler", "euler_maruyama")


@dataclass(frozen=True)
class Field:
    """Coefficients of ``u = sum u_k e_k``; the H-norm is the Euclidean norm."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def mode(cls, n, k, scale=1.0):
        c = np.zeros(n)
        c[k - 1] = scale
        return cls(c)

    @property
    def n(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class SdeScheme:
    kind: str = "exponential_euler"
    dt: float = 1e-3

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")

    def steps(self, t: float):
        """Step count and the adjusted step that lands exactly on ``t``."""
        if t < 0:
            raise ParameterError("horizon must be nonnegative")
        if t == 0:
            return 0, self.dt
        n = max(1, int(round(t / self.dt)))
        return n, t / n


@dataclass(frozen=True)
class MCEnsemble:
    M: int
    master_seed: int = 0
    scheme: SdeScheme = field(default_factory=SdeScheme)
    workers: int = 1
    chunk: int = 1024

    def __post_init__(self):
        if self.M < 1:
            raise ParameterError("ensemble needs at least one path")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ParameterError("master_seed must be an unsigned 64-bit integer")

    def manifest(self, basis, q, u0, t) -> dict:
        return {
            "master_seed": int(self.master_seed),
            "M": int(self.M),
            "dt": self.scheme.dt,
            "scheme": self.scheme.kind,
            "K": basis.K,
            "lambda_spec": q.to_dict(),
            "u0": [float(v) for v in np.asarray(u0).ravel()],
            "t": t,
        }


def path_seed(master_seed: int, p: int) -> int:
    """64-bit per-path seed derived by hashing ``(master_seed, p)``."""
    ss = np.random.SeedSequence([int(master_seed), int(p)])
    return int(ss.generate_state(1, np.uint64)[0])


def path_generator(master_seed: int, p: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(p)])))


class _Stepper:
    """Batched one-step map for states of shape ``(P, R, n)``."""

    def __init__(self, basis: BasisSpec, q: QSpec, scheme: SdeScheme, h: float):
        n = basis.n_modes
        self.n = n
        self.kind = scheme.kind
        self.h = h
        lam = q.lambdas_for(n)
        # lamT[k, m * n + i] = lambda_k T[k, m, i]
        self.lamT = (lam[:, None, None] * basis.triple_tensor).reshape(n, n * n)
        self.alpha = basis.alphas
        self.half_decay = np.exp(-0.5 * self.alpha * h)

    def noise(self, U, dW):
        G = (dW @ self.lamT).reshape(-1, self.n, self.n)
        return np.matmul(U, G)

    def __call__(self, U, dW):
        if self.kind == "exponential_euler":
            V = U * self.half_decay
            return (V + self.noise(V, dW)) * self.half_decay
        return U - self.h * self.alpha * U + self.noise(U, dW)


def drift_diffusion_step(u: Field, basis: BasisSpec, q: QSpec, scheme: SdeScheme, noise) -> Field:
    """Advance one step with the given ``N(0, dt)`` increments, one per mode.

    ``exponential_euler`` applies the exact heat factor ``exp(-alpha dt / 2)``
    on both sides of the Euler noise kick, which keeps the linear part exact
    while removing the ``O(alpha dt)`` variance bias of a one-sided split.
    """
    noise = np.asarray(noise, dtype=float).ravel()
    if noise.size != basis.n_modes:
        raise ParameterError(f"need {basis.n_modes} noise increments, got {noise.size}")
    step = _Stepper(basis, q, scheme, scheme.dt)
    out = step(u.coeffs[None, None, :], noise[None, :])
    return Field(out[0, 0])


def _integrate(U, stepper: _Stepper, Z, n_steps, record=None, first_path=0, master_seed=None):
    sq = np.sqrt(stepper.h)
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            U = stepper(U, sq * Z[:, s, :])
            if not np.isfinite(U).all():
                bad = int(np.flatnonzero(~np.isfinite(U).reshape(U.shape[0], -1).all(axis=1))[0])
                p = first_path + bad
                seed = path_seed(master_seed, p) if master_seed is not None else None
                raise DivergenceError(s + 1, path_seed=seed, path=p)
            if record is not None:
                record.append(U.copy())
    return U


@dataclass
class PathResult:
    final: Field
    trajectory: np.ndarray | None = None
    times: np.ndarray | None = None

    def write_trajectory_csv(self, path):
        if self.trajectory is None:
            raise ValueError("trajectory was not recorded")
        n = self.trajectory.shape[1]
        steps = np.arange(self.trajectory.shape[0])
        data = np.column_stack([steps, self.times, self.trajectory])
        header = ",".join(["step", "t"] + [f"u_{k}" for k in range(1, n + 1)])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _require_wellposed(q, basis):
    report = check_wellposed(q, basis)
    if not report.admissible:
        raise ParameterError(f"noise model is not admissible: {report.note}")


def simulate_path(u0: Field, t: float, basis: BasisSpec, q: QSpec, scheme: SdeScheme, seed: int,
                  path: int = 0, trajectory: bool = False) -> PathResult:
    """Simulate path ``path`` of the ensemble keyed by ``seed`` up to time ``t``."""
    if not t > 0:
        raise ParameterError("horizon t must be positive")
    _require_wellposed(q, basis)
    n_steps, h = scheme.steps(t)
    stepper = _Stepper(basis, q, scheme, h)
    Z = path_generator(seed, path).standard_normal((n_steps, basis.n_modes))[None]
    record = [] if trajectory else None
    U0 = np.asarray(u0.coeffs, dtype=float)[None, None, :]
    if record is not None:
        record.append(U0.copy())
    U = _integrate(U0, stepper, Z, n_steps, record, first_path=path, master_seed=seed)
    if record is None:
        return PathResult(Field(U[0, 0]))
    traj = np.array([r[0, 0] for r in record])
    return PathResult(Field(U[0, 0]), traj, np.arange(n_steps + 1) * h)


def ensemble_final_states(U0, t: float, basis: BasisSpec, q: QSpec, ensemble: MCEnsemble) -> np.ndarray:
    """Final states ``(M, R, n)`` for ``R`` initial conditions ``U0 (R, n)``.

    All initial conditions of a path share that path's noise (common random
    numbers). Rows are stored in path order whatever the worker count.
    """
    _require_wellposed(q, basis)
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    n = basis.n_modes
    if U0.shape[1] != n:
        raise ParameterError(f"initial conditions need {n} coefficients")
    M = ensemble.M
    out = np.empty((M, U0.shape[0], n))
    n_steps, h = ensemble.scheme.steps(t)
    if n_steps == 0:
        out[:] = U0
        return out
    stepper = _Stepper(basis, q, ensemble.scheme, h)
    seed = ensemble.master_seed

    def run(lo, hi):
        Z = np.empty((hi - lo, n_steps, n))
        for p in range(lo, hi):
            Z[p - lo] = path_generator(seed, p).standard_normal((n_steps, n))
        U = np.broadcast_to(U0, (hi - lo,) + U0.shape).copy()
        out[lo:hi] = _integrate(U, stepper, Z, n_steps, first_path=lo, master_seed=seed)

    bounds = [(lo, min(lo + ensemble.chunk, M)) for lo in range(0, M, ensemble.chunk)]
    if ensemble.workers > 1:
        with ThreadPoolExecutor(max_workers=ensemble.workers) as pool:
            for fut in [pool.submit(run, lo, hi) for lo, hi in bounds]:
                fut.result()
    else:
        for lo, hi in bounds:
            run(lo, hi)
    return out


def _pairwise_moments(S):
    """Mean and standard error over axis 0 with a fixed summation order.

    Samples are shifted by the first one so identical samples give an exact
    mean and an exactly zero standard error.
    """
    M = S.shape[0]
    base = S[0]
    dev = np.ascontiguousarray((S - base).T)
    mean_dev = dev.sum(axis=1) / M
    mean = base + mean_dev
    if M < 2:
        return mean, np.full_like(mean, np.nan)
    var = ((dev - mean_dev[:, None]) ** 2).sum(axis=1) / (M - 1)
    return mean, np.sqrt(var / M)


@dataclass
class MCTheta:
    theta_hat: np.ndarray
    stderr: np.ndarray
    manifest: dict

    @property
    def n(self) -> int:
        return self.theta_hat.shape[0]


def _outer_sym(X):
    p = sym_pairs(X.shape[-1])
    return X[..., p[:, 0]] * X[..., p[:, 1]]


def mc_theta(u0: Field, t: float, basis: BasisSpec, q: QSpec, ensemble: MCEnsemble) -> MCTheta:
    """Sample estimate of ``E[u(t) (x) u(t)]`` with entrywise standard errors."""
    if ensemble.M < 2:
        raise ParameterError("mc_theta needs M >= 2")
    X = ensemble_final_states(u0.coeffs[None, :], t, basis, q, ensemble)[:, 0, :]
    mean, se = _pairwise_moments(_outer_sym(X))
    n = basis.n_modes
    return MCTheta(_unsym(mean, n), _unsym(se, n), ensemble.manifest(basis, q, u0.coeffs, t))


def _unsym(v, n):
    # raw entries (not orthonormal coordinates) stored on the upper triangle
    p = sym_pairs(n)
    F = np.zeros(v.shape[:-1] + (n, n))
    F[..., p[:, 0], p[:, 1]] = v
    F[..., p[:, 1], p[:, 0]] = v
    return F


def pair_initial_conditions(n, pairs):
    """Rows ``e_i + e_j`` and ``e_i - e_j`` for each 1-based pair, interleaved."""
    U0 = np.zeros((2 * len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        U0[2 * r, i - 1] += 1.0
        U0[2 * r, j - 1] += 1.0
        U0[2 * r + 1, i - 1] += 1.0
        U0[2 * r + 1, j - 1] -= 1.0
    return U0


@dataclass
class MCPairs:
    """Monte Carlo ``theta^{i,j}`` estimates sharing one set of paths."""

    theta: dict
    stderr: dict
    manifest: dict
    states: np.ndarray | None = None

    def pair_samples(self, r):
        """Per-path raw upper-triangle samples of pair number ``r``."""
        X = self.states
        return _outer_sym(X[:, 2 * r]) - _outer_sym(X[:, 2 * r + 1])


def mc_theta_pairs(pairs, t: float, basis: BasisSpec, q: QSpec, ensemble: MCEnsemble,
                   keep_states: bool = False) -> MCPairs:
    """``theta(t, e_i + e_j) - theta(t, e_i - e_j)`` for every pair with common
    random numbers; standard errors are those of the per-path difference."""
    if ensemble.M < 2:
        raise ParameterError("mc_theta_pairs needs M >= 2")
    n = basis.n_modes
    pairs = [(int(i), int(j)) for i, j in pairs]
    for i, j in pairs:
        if not (1 <= i <= n and 1 <= j <= n):
            raise IndexError(f"pair ({i}, {j}) outside 1..{n}")
    X = ensemble_final_states(pair_initial_conditions(n, pairs), t, basis, q, ensemble)
    theta, stderr = {}, {}
    for r, key in enumerate(pairs):
        diff = _outer_sym(X[:, 2 * r]) - _outer_sym(X[:, 2 * r + 1])
        mean, se = _pairwise_moments(diff)
        theta[key] = _unsym(mean, n)
        stderr[key] = _unsym(se, n)
    manifest = ensemble.manifest(basis, q, np.zeros(n), t)
    manifest["u0"] = "pairs e_i +/- e_j"
    manifest["pairs"] = [list(p) for p in pairs]
    return MCPairs(theta, stderr, manifest, X if keep_states else None)


def mc_theta_ij(i: int, j: int, t: float, basis: BasisSpec, q: QSpec, ensemble: MCEnsemble) -> MCTheta:
    res = mc_theta_pairs([(i, j)], t, basis, q, ensemble)
    return MCTheta(res.theta[(i, j)], res.stderr[(i, j)], res.manifest)


__all__ = [
    "Field",
    "SdeScheme",
    "MCEnsemble",
    "drift_diffusion_step",
    "simulate_path",
    "ensemble_final_states",
    "mc_theta",
    "mc_theta_pairs",
    "mc_theta_ij",
    "path_seed",
    "path_generator",
]
