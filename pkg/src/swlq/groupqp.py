"""Operator-splitting solver for quadratic programs with grouped norm penalties.

Solves

    minimize  1/2 z'Hz + c'z + sum_g tau_g ||E_g z + e_g||_2

by alternating minimization on the consensus splitting y_g = E_g z + e_g:
the z-step solves regularized normal equations through a factorization
computed once, the y-step is a per-group block soft threshold, and scaled
dual ascent enforces consensus.  No randomized steps; fixed settings and
inputs give bit-identical iterates.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "NormGroup",
    "GroupLassoQP",
    "SolverSettings",
    "SolverReport",
    "ZStepCache",
    "block_soft_threshold",
    "objective",
    "prepare",
    "solve",
]


@dataclass(frozen=True)
class NormGroup:
    """One penalized affine expression tau * ||E z + e||_2."""

    mat: np.ndarray
    off: np.ndarray
    weight: float

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.mat, dtype=float))
        off = np.asarray(self.off, dtype=float).reshape(-1)
        if mat.shape[0] != off.shape[0]:
            raise ValueError(f"offset length {off.shape[0]} does not match {mat.shape[0]} rows")
        if not self.weight > 0:
            raise ValueError("group weight must be positive")
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "off", off)


@dataclass(frozen=True)
class GroupLassoQP:
    """Problem data: PSD quadratic part plus weighted Euclidean-norm groups."""

    h: np.ndarray
    c: np.ndarray
    groups: tuple = field(default=())

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if h.shape[0] != h.shape[1] or h.shape[0] != c.shape[0]:
            raise ValueError(f"H {h.shape} and c {c.shape} dimensions are inconsistent")
        if np.max(np.abs(h - h.T)) > 1e-8 * (1.0 + np.max(np.abs(h))):
            raise ValueError("H must be symmetric")
        h = 0.5 * (h + h.T)
        min_eig = float(np.linalg.eigvalsh(h).min())
        if min_eig < -1e-8 * (1.0 + np.max(np.abs(h))):
            raise ValueError(f"H must be positive semidefinite (min eig {min_eig:.3e})")
        groups = tuple(self.groups)
        for g in groups:
            if g.mat.shape[1] != h.shape[0]:
                raise ValueError("group matrix column count does not match H")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "groups", groups)

    @property
    def dim(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class SolverSettings:
    """``rho`` is the initial penalty; residual balancing may rescale it."""

    rho: float = 1.0
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_iters: int = 20000
    # Residual balancing (Boyd et al. sec. 3.4.1): rescale rho by
    # ``balance_factor`` when one residual exceeds the other by
    # ``balance_ratio``; 0 disables balancing.
    balance_ratio: float = 10.0
    balance_factor: float = 2.0
    balance_every: int = 10


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool


@dataclass(frozen=True)
class ZStepCache:
    """Factorization and stacked group data reusable across weight changes."""

    factor: object
    e_stack: np.ndarray
    e_off: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray
    rho: float


def block_soft_threshold(v, kappa: float) -> np.ndarray:
    """Proximal map of kappa * ||.||_2: shrink toward zero, clip inside the ball."""
    if kappa < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= kappa:
        return np.zeros_like(v)
    return (1.0 - kappa / norm) * v


def objective(problem: GroupLassoQP, z) -> float:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != problem.dim:
        raise ValueError(f"z has dimension {z.shape[0]}, expected {problem.dim}")
    val = 0.5 * float(z @ problem.h @ z) + float(problem.c @ z)
    for g in problem.groups:
        val += g.weight * float(np.linalg.norm(g.mat @ z + g.off))
    return val


def _zstep_factor(problem: GroupLassoQP, e_stack: np.ndarray, rho: float):
    m = problem.h + rho * (e_stack.T @ e_stack)
    try:
        return scipy.linalg.cho_factor(0.5 * (m + m.T), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(f"z-step matrix is not positive definite: {exc}") from exc


def prepare(problem: GroupLassoQP, rho: float) -> ZStepCache:
    """Stack the group maps and factor H + rho * sum E_g'E_g once.

    The factorization depends only on H, the group matrices and rho, so it
    can be shared by solves that differ only in the group weights.
    """
    e_stack = np.concatenate([g.mat for g in problem.groups], axis=0)
    e_off = np.concatenate([g.off for g in problem.groups])
    sizes = np.asarray([g.mat.shape[0] for g in problem.groups])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return ZStepCache(
        factor=_zstep_factor(problem, e_stack, rho),
        e_stack=e_stack,
        e_off=e_off,
        starts=starts,
        sizes=sizes,
        rho=rho,
    )


def _solve_quadratic(problem: GroupLassoQP) -> np.ndarray:
    # No norm groups: plain least-norm minimizer of the quadratic.
    z, *_ = np.linalg.lstsq(problem.h, -problem.c, rcond=None)
    return z


def solve(problem: GroupLassoQP, settings: SolverSettings = None, cache: ZStepCache = None):
    """Run the splitting iteration; returns (z, SolverReport).

    Non-convergence within ``max_iters`` returns the last iterate flagged
    ``converged=False``; the caller decides what to do with it.
    """
    settings = settings or SolverSettings()
    if not problem.groups:
        z = _solve_quadratic(problem)
        return z, SolverReport(1, 0.0, 0.0, objective(problem, z), True)
    if cache is None or cache.rho != settings.rho:
        cache = prepare(problem, settings.rho)
    rho = settings.rho
    factor = cache.factor
    e_stack, e_off = cache.e_stack, cache.e_off
    starts, sizes = cache.starts, cache.sizes
    taus = np.asarray([g.weight for g in problem.groups])
    d = problem.dim
    m_total = e_off.shape[0]

    z = np.zeros(d)
    y = e_off.copy()
    v = np.zeros(m_total)
    sqrt_m = np.sqrt(m_total)
    sqrt_d = np.sqrt(d)
    norm_e_off = float(np.linalg.norm(e_off))
    iterations = 0
    r_norm = s_norm = np.inf
    converged = False
    for iterations in range(1, settings.max_iters + 1):
        rhs = -problem.c + rho * (e_stack.T @ (y - e_off - v))
        z = scipy.linalg.cho_solve(factor, rhs)
        w = e_stack @ z + e_off
        y_old = y
        # Vectorized per-group block soft threshold.
        wv = w + v
        norms = np.sqrt(np.add.reduceat(wv * wv, starts))
        scale = np.where(norms > taus / rho, 1.0 - (taus / rho) / np.maximum(norms, 1e-300), 0.0)
        y = wv * np.repeat(scale, sizes)
        v = v + w - y
        r_norm = float(np.linalg.norm(w - y))
        s_norm = rho * float(np.linalg.norm(e_stack.T @ (y - y_old)))
        eps_pri = sqrt_m * settings.abs_tol + settings.rel_tol * max(
            float(np.linalg.norm(w)), float(np.linalg.norm(y)), norm_e_off
        )
        eps_dual = sqrt_d * settings.abs_tol + settings.rel_tol * rho * float(
            np.linalg.norm(e_stack.T @ v)
        )
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if (
            settings.balance_ratio > 0
            and iterations % settings.balance_every == 0
            and iterations < settings.max_iters // 2
        ):
            if r_norm > settings.balance_ratio * s_norm and rho < 1e8:
                rho *= settings.balance_factor
                v /= settings.balance_factor
                factor = _zstep_factor(problem, e_stack, rho)
            elif s_norm > settings.balance_ratio * r_norm and rho > 1e-8:
                rho /= settings.balance_factor
                v *= settings.balance_factor
                factor = _zstep_factor(problem, e_stack, rho)
    return z, SolverReport(iterations, r_norm, s_norm, objective(problem, z), converged)
