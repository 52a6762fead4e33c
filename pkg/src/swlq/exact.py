"""Exact finite-horizon solution via backward dynamic programming.

The one-step Riccati map under mode i at step k is

    rho_{i,k}(P) = Q(k) + A_i' P A_i - A_i' P B_i (R(k) + B_i' P B_i)^{-1} B_i' P A_i

and the cost-to-go from state x at step k is the pointwise minimum of the
quadratics ``1/2 x' P x`` over the value set H_k, where H_N = {Psi} and
H_k collects rho_{i,k}(P) over all modes i and all P in H_{k+1}.  The sets
grow like q^(N-k), which is exactly why the relaxed pipeline exists; this
module is the ground truth the relaxation is measured against.

Argmin ties are broken deterministically: lowest mode index first, then
lowest stored matrix index.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    CapacityError,
    ControlSolution,
    CostSpec,
    NumericError,
    SwitchedSystem,
    Trajectory,
    content_hash,
    evaluate_cost,
)

__all__ = [
    "RiccatiSet",
    "FeedbackGain",
    "riccati_map",
    "feedback_gain",
    "build_value_sets",
    "value_at",
    "exact_online_control",
    "brute_force_solve",
    "save_value_sets",
    "load_value_sets",
]

DEFAULT_DEDUPE_TOL = 1e-12
DEFAULT_SET_CAP = 2**22
DEFAULT_ENUM_CAP = 2**20


@dataclass(frozen=True)
class FeedbackGain:
    """State-feedback gain K for one (mode, step) pair; the input is u = -K x."""

    gain: np.ndarray
    mode: int
    step: int


@dataclass(frozen=True)
class RiccatiSet:
    """The family of value-set levels H_0..H_N with construction provenance.

    ``levels[k]`` stacks the matrices of H_k as an array (|H_k|, n, n).
    ``prov_modes[k][j]`` / ``prov_parents[k][j]`` record the 1-based mode and
    the parent index in H_{k+1} that produced matrix j of H_k (None at k = N).
    """

    levels: tuple
    prov_modes: tuple
    prov_parents: tuple
    dedupe_tol: float
    problem_hash: str

    @property
    def horizon(self) -> int:
        return len(self.levels) - 1

    def size(self, k: int) -> int:
        return self.levels[k].shape[0]

    def matrices(self, k: int) -> np.ndarray:
        return self.levels[k]


def _spd_solve(g_mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # (R + B'PB) is PD whenever R > 0 and P >= 0; a failure means bad input.
    try:
        factor = scipy.linalg.cho_factor(g_mat, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"input weight block is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def _check_mode_step(system: SwitchedSystem, spec: CostSpec, i: int, k: int) -> None:
    if not 1 <= i <= system.q:
        raise ValueError(f"mode index {i} outside 1..{system.q}")
    if not 0 <= k <= spec.horizon - 1:
        raise ValueError(f"step {k} outside 0..{spec.horizon - 1}")


def riccati_map(system: SwitchedSystem, spec: CostSpec, i: int, k: int, p_mat) -> np.ndarray:
    """One backward step of the value matrix under mode i at step k (symmetrized)."""
    _check_mode_step(system, spec, i, k)
    p_mat = np.atleast_2d(np.asarray(p_mat, dtype=float))
    if p_mat.shape != (system.n, system.n):
        raise ValueError(f"P must be {system.n}x{system.n}, got {p_mat.shape}")
    if np.max(np.abs(p_mat - p_mat.T)) > 1e-8:
        raise ValueError("P must be symmetric")
    a_i = system.a[i - 1]
    b_i = system.b[i - 1]
    pa = p_mat @ a_i
    pb = p_mat @ b_i
    gain = _spd_solve(spec.r_mats[k] + b_i.T @ pb, b_i.T @ pa)
    rho = spec.q_mats[k] + a_i.T @ pa - pa.T @ b_i @ gain
    return 0.5 * (rho + rho.T)


def feedback_gain(system: SwitchedSystem, spec: CostSpec, i: int, k: int, p_mat) -> FeedbackGain:
    """Optimal state-feedback gain (R(k) + B'PB)^{-1} B'PA for mode i at step k."""
    _check_mode_step(system, spec, i, k)
    p_mat = np.atleast_2d(np.asarray(p_mat, dtype=float))
    a_i = system.a[i - 1]
    b_i = system.b[i - 1]
    pb = p_mat @ b_i
    gain = _spd_solve(spec.r_mats[k] + b_i.T @ pb, b_i.T @ (p_mat @ a_i))
    return FeedbackGain(gain=gain, mode=i, step=k)


def _riccati_batch(a_i, b_i, q_k, r_k, p_stack):
    """Riccati map applied to a stack of parent matrices, shape (M, n, n)."""
    pa = p_stack @ a_i                       # (M, n, n)
    pb = p_stack @ b_i                       # (M, n, n_u)
    atpa = np.matmul(a_i.T, pa)              # (M, n, n)
    g = r_k + np.matmul(b_i.T, pb)           # (M, n_u, n_u)
    btpa = np.matmul(b_i.T, pa)              # (M, n_u, n)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"input weight block is not positive definite: {exc}") from exc
    correction = np.matmul(btpa.transpose(0, 2, 1), np.linalg.solve(g, btpa))
    rho = q_k + atpa - correction
    return 0.5 * (rho + rho.transpose(0, 2, 1))


def _candidate_values(a_i, b_i, q_k, r_k, p_stack, x):
    """x' rho_{i,k}(P) x for every P in the stack, without forming the maps."""
    y = a_i @ x                              # (n,)
    py = p_stack @ y                         # (M, n)
    ypy = py @ y                             # (M,)
    btpy = py @ b_i                          # (M, n_u)
    g = r_k + np.matmul(b_i.T, p_stack @ b_i)
    w = np.linalg.solve(g, btpy[:, :, None])[:, :, 0]
    return float(x @ q_k @ x) + ypy - np.einsum("mj,mj->m", btpy, w)


def _dedupe_indices(stack: np.ndarray, tol: float) -> np.ndarray:
    """Indices of representatives after merging near-duplicates.

    Candidates are sorted lexicographically; adjacent runs whose entrywise
    max difference stays within tol are merged onto the earliest original
    index.  Exact for identical matrices, which is the intended use.
    """
    m = stack.shape[0]
    flat = stack.reshape(m, -1)
    order = np.lexsort(flat.T[::-1])
    keep = []
    group_rep = None
    prev = None
    for pos in order:
        row = flat[pos]
        if prev is None or np.max(np.abs(row - prev)) > tol:
            if group_rep is not None:
                keep.append(group_rep)
            group_rep = pos
        else:
            group_rep = min(group_rep, pos)
        prev = row
    if group_rep is not None:
        keep.append(group_rep)
    return np.sort(np.asarray(keep, dtype=np.int64))


def build_value_sets(
    system: SwitchedSystem,
    spec: CostSpec,
    dedupe_tol: float = DEFAULT_DEDUPE_TOL,
    cap: int = DEFAULT_SET_CAP,
) -> RiccatiSet:
    """Backward construction of the value sets H_N..H_0.

    ``dedupe_tol`` merges matrices whose entrywise max difference stays
    within the tolerance (0 disables merging).  Raises CapacityError when
    the projected terminal cardinality q**N exceeds ``cap``.
    """
    if dedupe_tol < 0:
        raise ValueError("dedupe tolerance must be nonnegative")
    horizon = spec.horizon
    if system.q**horizon > cap:
        raise CapacityError(
            f"projected |H_0| = {system.q}^{horizon} exceeds the cap {cap}"
        )
    levels = [None] * (horizon + 1)
    prov_modes = [None] * (horizon + 1)
    prov_parents = [None] * (horizon + 1)
    levels[horizon] = np.array(spec.psi)[None]
    for k in range(horizon - 1, -1, -1):
        parents = levels[k + 1]
        chunks, mode_idx, parent_idx = [], [], []
        for i in range(system.q):
            chunks.append(
                _riccati_batch(system.a[i], system.b[i], spec.q_mats[k], spec.r_mats[k], parents)
            )
            mode_idx.append(np.full(parents.shape[0], i + 1, dtype=np.int64))
            parent_idx.append(np.arange(parents.shape[0], dtype=np.int64))
        cand = np.concatenate(chunks)
        modes = np.concatenate(mode_idx)
        par = np.concatenate(parent_idx)
        if dedupe_tol > 0 and cand.shape[0] > 1:
            keep = _dedupe_indices(cand, dedupe_tol)
            cand, modes, par = cand[keep], modes[keep], par[keep]
        if cand.shape[0] > cap:
            raise CapacityError(f"|H_{k}| = {cand.shape[0]} exceeds the cap {cap}")
        levels[k] = cand
        prov_modes[k] = modes
        prov_parents[k] = par
    return RiccatiSet(
        levels=tuple(levels),
        prov_modes=tuple(prov_modes),
        prov_parents=tuple(prov_parents),
        dedupe_tol=float(dedupe_tol),
        problem_hash=content_hash(system, spec),
    )


def value_at(sets: RiccatiSet, k: int, x) -> tuple:
    """Cost-to-go from state x at step k and the argmin matrix index in H_k.

    The value is the pointwise minimum of ``1/2 x' P x`` over the stored
    level; ties resolve to the lowest stored index.
    """
    if not 0 <= k <= sets.horizon:
        raise ValueError(f"step {k} outside 0..{sets.horizon}")
    x = np.asarray(x, dtype=float).reshape(-1)
    vals = np.einsum("mij,i,j->m", sets.levels[k], x, x)
    idx = int(np.argmin(vals))
    return 0.5 * float(vals[idx]), idx


def exact_online_control(
    system: SwitchedSystem, spec: CostSpec, sets: RiccatiSet, x0
) -> ControlSolution:
    """Online optimal policy: greedy mode/value-matrix selection plus feedback.

    At each step the pair (mode, parent matrix) minimizing the one-step
    quadratic bound is selected and the associated feedback input applied;
    the resulting cost equals the cost-to-go at (0, x0).
    """
    if sets.horizon != spec.horizon:
        raise ValueError("value sets were built for a different horizon")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != system.n:
        raise ValueError(f"x0 has dimension {x.shape[0]}, expected {system.n}")
    horizon = spec.horizon
    states = np.empty((horizon + 1, system.n))
    inputs = np.empty((horizon, system.n_u))
    modes = np.empty(horizon, dtype=np.int64)
    states[0] = x
    for k in range(horizon):
        parents = sets.levels[k + 1]
        best_val, best_mode, best_parent = np.inf, 0, 0
        for i in range(system.q):
            vals = _candidate_values(
                system.a[i], system.b[i], spec.q_mats[k], spec.r_mats[k], parents, x
            )
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val, best_mode, best_parent = float(vals[j]), i, j
        p_next = parents[best_parent]
        gain = feedback_gain(system, spec, best_mode + 1, k, p_next).gain
        u = -gain @ x
        modes[k] = best_mode + 1
        inputs[k] = u
        x = system.a[best_mode] @ x + system.b[best_mode] @ u
        states[k + 1] = x
    trajectory = Trajectory(states, inputs, modes)
    return ControlSolution(trajectory, evaluate_cost(spec, trajectory), "exact-dp")


def _chain_for_sequence(system: SwitchedSystem, spec: CostSpec, seq) -> np.ndarray:
    """Time-varying Riccati chain for a fixed 0-based mode sequence.

    Deliberately a separate, plain-numpy code path so brute-force enumeration
    stays independent of the batched value-set machinery.
    """
    horizon = spec.horizon
    n = system.n
    chain = np.empty((horizon + 1, n, n))
    chain[horizon] = spec.psi
    for k in range(horizon - 1, -1, -1):
        a_k = system.a[seq[k]]
        b_k = system.b[seq[k]]
        p = chain[k + 1]
        pa = p @ a_k
        g = spec.r_mats[k] + b_k.T @ p @ b_k
        gain = np.linalg.solve(g, b_k.T @ pa)
        rho = spec.q_mats[k] + a_k.T @ pa - pa.T @ b_k @ gain
        chain[k] = 0.5 * (rho + rho.T)
    return chain


def brute_force_solve(
    system: SwitchedSystem, spec: CostSpec, x0, cap: int = DEFAULT_ENUM_CAP
) -> ControlSolution:
    """Enumerate every mode sequence and solve the fixed-sequence problem exactly.

    Each sequence is evaluated independently (no shared-prefix reuse) so this
    stays a true oracle for the dynamic-programming path.  Ties resolve to
    the lexicographically smallest sequence.
    """
    horizon = spec.horizon
    if system.q**horizon > cap:
        raise CapacityError(
            f"enumeration of {system.q}^{horizon} sequences exceeds the cap {cap}"
        )
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != system.n:
        raise ValueError(f"x0 has dimension {x.shape[0]}, expected {system.n}")
    best_cost = np.inf
    best_seq = None
    for seq in itertools.product(range(system.q), repeat=horizon):
        chain = _chain_for_sequence(system, spec, seq)
        cost = 0.5 * float(x @ chain[0] @ x)
        if cost < best_cost:
            best_cost = cost
            best_seq = seq
    chain = _chain_for_sequence(system, spec, best_seq)
    states = np.empty((horizon + 1, system.n))
    inputs = np.empty((horizon, system.n_u))
    states[0] = x
    xk = x
    for k in range(horizon):
        s = best_seq[k]
        p = chain[k + 1]
        g = spec.r_mats[k] + system.b[s].T @ p @ system.b[s]
        gain = np.linalg.solve(g, system.b[s].T @ p @ system.a[s])
        inputs[k] = -gain @ xk
        xk = system.a[s] @ xk + system.b[s] @ inputs[k]
        states[k + 1] = xk
    trajectory = Trajectory(states, inputs, np.asarray(best_seq, dtype=np.int64) + 1)
    return ControlSolution(trajectory, evaluate_cost(spec, trajectory), "brute-force")


# ---------------------------------------------------------------------------
# Cache file: header (dims, dedupe tolerance, problem hash) + per-level
# matrix stacks + provenance pairs, stored as a compressed npz archive.
# ---------------------------------------------------------------------------


def save_value_sets(sets: RiccatiSet, path) -> None:
    payload = {
        "meta": np.array([sets.horizon, sets.levels[0].shape[1]], dtype=np.int64),
        "dedupe_tol": np.array([sets.dedupe_tol]),
        "problem_hash": np.frombuffer(bytes.fromhex(sets.problem_hash), dtype=np.uint8),
    }
    for k in range(sets.horizon + 1):
        payload[f"level_{k}"] = sets.levels[k]
        if sets.prov_modes[k] is not None:
            payload[f"prov_mode_{k}"] = sets.prov_modes[k]
            payload[f"prov_parent_{k}"] = sets.prov_parents[k]
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **payload)


def load_value_sets(path, system: SwitchedSystem = None, spec: CostSpec = None) -> RiccatiSet:
    """Load a cached RiccatiSet; verifies the content hash when a problem is given."""
    with np.load(path) as data:
        horizon = int(data["meta"][0])
        dedupe_tol = float(data["dedupe_tol"][0])
        stored_hash = bytes(data["problem_hash"].tobytes()).hex()
        levels, prov_modes, prov_parents = [], [], []
        for k in range(horizon + 1):
            levels.append(data[f"level_{k}"])
            if f"prov_mode_{k}" in data:
                prov_modes.append(data[f"prov_mode_{k}"])
                prov_parents.append(data[f"prov_parent_{k}"])
            else:
                prov_modes.append(None)
                prov_parents.append(None)
    if system is not None and spec is not None:
        expected = content_hash(system, spec)
        if expected != stored_hash:
            raise ValueError("cached value sets do not match the given problem")
    return RiccatiSet(
        levels=tuple(levels),
        prov_modes=tuple(prov_modes),
        prov_parents=tuple(prov_parents),
        dedupe_tol=dedupe_tol,
        problem_hash=stored_hash,
    )
