"""Polynomial-time mode-sequence synthesis through a block-sparse relaxation.

The mode choice at step k is encoded by auxiliary vectors f_1(k)..f_q(k):
f_i(k) is the gap between the realized next state and the prediction of mode
i, so the active mode's block is exactly zero.  Treating the stacked blocks
as free continuous variables turns the combinatorial problem into a
continuous one; the requirement "some block is zero per step" is relaxed to
a weighted sum of block norms.

The pipeline implemented here:

1.  Condense: keep u(k) and g(k) := f_1(k) as free variables, reconstruct
    the state by forward substitution through mode 1's row
    ``x(k+1) = A_1 x(k) + B_1 u(k) + g(k)`` and every other block by the
    affine identity ``f_i(k) = g(k) + (A_1 - A_i) x(k) + (B_1 - B_i) u(k)``.
    The result is an unconstrained quadratic-plus-group-norms program, solved
    jointly in (u, g).  This equals the nested scheme "minimize over u first,
    then over the auxiliary blocks" because joint and sequential minimization
    of the same function agree.
2.  Reweight: re-solve with weights 1/(||block|| + eps), normalized per step
    so the q weights sum to q.
3.  Project: pick per step the mode whose block has minimal Euclidean norm.
4.  Refine: starting from the projected sequence (plus a handful of cheap
    deterministic alternatives), run a best-improvement descent over single
    mode flips, scoring each candidate by its fixed-sequence optimal cost
    (one Riccati chain per evaluation).  The winner seeds the final pass.
5.  Re-solve the now mode-fixed time-varying problem by a single Riccati
    chain, recomputing the applied mode online from that chain.

The refinement step exists because the group-norm relaxation on its own has
a structural blind spot: the penalty vanishes whenever all blocks vanish,
so its minimizer can "teleport" the state once and then coast with every
block at zero, which carries no mode information.  The flip descent turns
the projected sequence into a locally optimal one at polynomial cost
(O(sweeps * N^2 * q) Riccati steps), preserving the storage profile of a
single matrix chain.

For q = 1 the feasibility set of the stacked blocks degenerates to {0},
which is convex, so no relaxation is involved: the single block is pinned
to zero exactly and step 1 reduces to the classic linear-quadratic solve.
"""

from dataclasses import dataclass, field

import numpy as np

from . import groupqp
from .core import ControlSolution, CostSpec, SwitchedSystem, Trajectory, evaluate_cost
from .exact import feedback_gain, riccati_map

__all__ = [
    "AuxiliarySequence",
    "CondensedProgram",
    "RelaxSettings",
    "RelaxReport",
    "MultiplierCertificate",
    "RelaxedSolution",
    "build_condensed_program",
    "solve_relaxation",
    "project_modes",
    "refine_mode_sequence",
    "mode_sequence_control",
    "check_stationarity",
    "solve_relaxed",
    "reconstruct_blocks",
]


@dataclass(frozen=True)
class AuxiliarySequence:
    """Per-step mode-gap blocks f_i(k) and the weights they were solved under.

    ``blocks`` has shape (N, q, n); ``weights`` has shape (N, q), all > 0.
    """

    blocks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if blocks.ndim != 3:
            raise ValueError("blocks must have shape (N, q, n)")
        if weights.shape != blocks.shape[:2]:
            raise ValueError("weights must have shape (N, q)")
        if not np.all(np.isfinite(blocks)) or not np.all(np.isfinite(weights)):
            raise ValueError("blocks and weights must be finite")
        if weights.min() <= 0:
            raise ValueError("weights must be positive")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "weights", weights)

    def norms(self) -> np.ndarray:
        """Euclidean norm of every block, shape (N, q)."""
        return np.linalg.norm(self.blocks, axis=2)


@dataclass(frozen=True)
class CondensedProgram:
    """The state-eliminated convex program in the stacked variable z.

    z stacks per step [u(k); g(k)], k = 0..N-1, so dim z = N (n_u + n).  The
    quadratic part encodes gamma1 times the performance index as a function
    of z given x0 (plus ``constant``); each (i, k) group is the affine map
    returning block f_i(k) with weight gamma2 * w_i(k), ordered k-major with
    mode i inner.  The stacked mode matrices are retained for reporting and
    the stationarity check.
    """

    problem: groupqp.GroupLassoQP
    constant: float
    cost: CostSpec
    state_maps: np.ndarray      # (N+1, n, d): x(k) = state_maps[k] @ z + state_offs[k]
    state_offs: np.ndarray      # (N+1, n)
    a_stack: np.ndarray         # (q*n, n)
    b_stack: np.ndarray         # (q*n, n_u)
    replicator: np.ndarray      # (q*n, n), q copies of the identity
    gamma1: float
    gamma2: float
    x0: np.ndarray
    n: int
    n_u: int
    q: int
    horizon: int

    @property
    def dim(self) -> int:
        return self.horizon * (self.n_u + self.n)

    def input_indices(self, k: int) -> slice:
        base = k * (self.n_u + self.n)
        return slice(base, base + self.n_u)

    def gap_indices(self, k: int) -> slice:
        base = k * (self.n_u + self.n) + self.n_u
        return slice(base, base + self.n)

    def inputs_of(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float).reshape(self.horizon, self.n_u + self.n)[:, : self.n_u]

    def gaps_of(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float).reshape(self.horizon, self.n_u + self.n)[:, self.n_u :]

    def states_of(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        return np.einsum("knd,d->kn", self.state_maps, z) + self.state_offs

    def blocks_of(self, z) -> np.ndarray:
        """Evaluate every block map at z, shape (N, q, n)."""
        x = self.states_of(z)
        u = self.inputs_of(z)
        g = self.gaps_of(z)
        n, q, horizon = self.n, self.q, self.horizon
        a1 = self.a_stack[:n]
        b1 = self.b_stack[:n]
        blocks = np.empty((horizon, q, n))
        for i in range(q):
            da = a1 - self.a_stack[i * n : (i + 1) * n]
            db = b1 - self.b_stack[i * n : (i + 1) * n]
            blocks[:, i, :] = g + x[:-1] @ da.T + u @ db.T
        return blocks

    def objective(self, z) -> float:
        """Full objective including the constant dropped from the QP form."""
        return groupqp.objective(self.problem, z) + self.constant


@dataclass(frozen=True)
class RelaxSettings:
    """Knobs of the relaxation: objective weights, reweighting, solver tolerances.

    ``reweights`` counts total convex solves; the first uses unit weights.
    """

    gamma1: float = 1.0
    gamma2: float = 1.0
    reweights: int = 3
    epsilon: float = 1e-6
    solver: groupqp.SolverSettings = field(default_factory=groupqp.SolverSettings)

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma weights must be positive")
        if self.reweights < 1:
            raise ValueError("at least one solve is required")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "RelaxSettings":
        known = {"gamma1", "gamma2", "reweights", "epsilon", "solver"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown settings keys: {sorted(unknown)}")
        solver_data = data.get("solver", {})
        solver_known = {"rho", "abs_tol", "rel_tol", "max_iters"}
        solver_unknown = set(solver_data) - solver_known
        if solver_unknown:
            raise ValueError(f"unknown solver settings keys: {sorted(solver_unknown)}")
        solver = groupqp.SolverSettings(
            rho=float(solver_data.get("rho", 1.0)),
            abs_tol=float(solver_data.get("abs_tol", 1e-9)),
            rel_tol=float(solver_data.get("rel_tol", 1e-7)),
            max_iters=int(solver_data.get("max_iters", 20000)),
        )
        return cls(
            gamma1=float(data.get("gamma1", 1.0)),
            gamma2=float(data.get("gamma2", 1.0)),
            reweights=int(data.get("reweights", 3)),
            epsilon=float(data.get("epsilon", 1e-6)),
            solver=solver,
        )

    def to_dict(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "reweights": self.reweights,
            "epsilon": self.epsilon,
            "solver": {
                "rho": self.solver.rho,
                "abs_tol": self.solver.abs_tol,
                "rel_tol": self.solver.rel_tol,
                "max_iters": self.solver.max_iters,
            },
        }


@dataclass(frozen=True)
class RelaxReport:
    """Diagnostics of the reweighted solves plus the data needed for checks."""

    solver_reports: tuple
    mode_seq_history: tuple
    objective: float
    converged: bool
    z: np.ndarray
    program: CondensedProgram

    @property
    def reweight_count(self) -> int:
        return len(self.solver_reports)

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.solver_reports)


@dataclass(frozen=True)
class MultiplierCertificate:
    """Least-squares multipliers for the stacked first-order conditions."""

    multipliers: np.ndarray
    stationarity_residual: float
    adjoint_residual: float


@dataclass(frozen=True)
class RelaxedSolution:
    """Everything the pipeline produced for one instance.

    ``mode_seq`` is the offline sequence the pipeline settled on (after
    refinement); ``projected_seq`` is the raw block-norm projection it
    started from.  The applied sequence (after online recomputation) lives
    in ``control.trajectory.mode_seq`` and may differ, which
    ``online_divergence`` counts.
    """

    mode_seq: np.ndarray
    projected_seq: np.ndarray
    auxiliary: AuxiliarySequence
    riccati_chain: np.ndarray
    control: ControlSolution
    report: RelaxReport

    @property
    def online_divergence(self) -> int:
        return int(np.sum(self.mode_seq != self.control.trajectory.mode_seq))


def build_condensed_program(
    system: SwitchedSystem,
    spec: CostSpec,
    x0,
    weights=None,
    gamma1: float = 1.0,
    gamma2: float = 1.0,
) -> CondensedProgram:
    """Eliminate states by forward substitution and assemble the convex program.

    ``weights`` is an (N, q) array of positive block weights (defaults to
    ones).  The returned program is unconstrained in z = [u(0); g(0); ...].
    """
    n, n_u, q = system.n, system.n_u, system.q
    horizon = spec.horizon
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {n}")
    if weights is None:
        weights = np.ones((horizon, q))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (horizon, q):
        raise ValueError(f"weights must have shape ({horizon}, {q}), got {weights.shape}")
    if weights.min() <= 0:
        raise ValueError("weights must be positive")
    if gamma1 <= 0 or gamma2 <= 0:
        raise ValueError("gamma weights must be positive")

    d = horizon * (n_u + n)
    a1, b1 = system.a[0], system.b[0]

    # Forward substitution through mode 1's row: x(k) affine in z.
    state_maps = np.zeros((horizon + 1, n, d))
    state_offs = np.zeros((horizon + 1, n))
    state_offs[0] = x0
    for k in range(horizon):
        base = k * (n_u + n)
        state_maps[k + 1] = a1 @ state_maps[k]
        state_maps[k + 1][:, base : base + n_u] += b1
        state_maps[k + 1][:, base + n_u : base + n_u + n] += np.eye(n)
        state_offs[k + 1] = a1 @ state_offs[k]

    h = np.zeros((d, d))
    c = np.zeros(d)
    constant = 0.0
    for k in range(horizon + 1):
        q_k = spec.q_mats[k]
        qs = q_k @ state_maps[k]
        h += state_maps[k].T @ qs
        c += state_maps[k].T @ (q_k @ state_offs[k])
        constant += 0.5 * float(state_offs[k] @ q_k @ state_offs[k])
    for k in range(horizon):
        base = k * (n_u + n)
        h[base : base + n_u, base : base + n_u] += spec.r_mats[k]
    h *= gamma1
    c *= gamma1
    constant *= gamma1
    h = 0.5 * (h + h.T)

    groups = []
    for k in range(horizon):
        base = k * (n_u + n)
        for i in range(q):
            e_mat = np.zeros((n, d))
            e_mat[:, base + n_u : base + n_u + n] = np.eye(n)
            if i > 0:
                da = a1 - system.a[i]
                db = b1 - system.b[i]
                e_mat += da @ state_maps[k]
                e_mat[:, base : base + n_u] += db
                e_off = da @ state_offs[k]
            else:
                e_off = np.zeros(n)
            groups.append(groupqp.NormGroup(e_mat, e_off, gamma2 * float(weights[k, i])))

    problem = groupqp.GroupLassoQP(h, c, tuple(groups))
    return CondensedProgram(
        problem=problem,
        constant=constant,
        cost=spec,
        state_maps=state_maps,
        state_offs=state_offs,
        a_stack=system.a.reshape(q * n, n),
        b_stack=system.b.reshape(q * n, n_u),
        replicator=np.tile(np.eye(n), (q, 1)),
        gamma1=gamma1,
        gamma2=gamma2,
        x0=x0,
        n=n,
        n_u=n_u,
        q=q,
        horizon=horizon,
    )


def _solve_single_mode(program: CondensedProgram, settings: RelaxSettings):
    """q = 1: the block-feasibility set is {0}, so pin g and solve the pure QP."""
    d = program.dim
    u_idx = np.concatenate(
        [np.arange(program.input_indices(k).start, program.input_indices(k).stop)
         for k in range(program.horizon)]
    )
    h_uu = program.problem.h[np.ix_(u_idx, u_idx)]
    c_u = program.problem.c[u_idx]
    z_u, report = groupqp.solve(groupqp.GroupLassoQP(h_uu, c_u, ()), settings.solver)
    z = np.zeros(d)
    z[u_idx] = z_u
    return z, report


def solve_relaxation(system: SwitchedSystem, spec: CostSpec, x0, settings: RelaxSettings = None):
    """Reweighted convex solves; returns (AuxiliarySequence, inputs, RelaxReport).

    The first solve uses unit weights; each following solve reweights blocks
    by 1/(norm + epsilon), normalized per step so the weights sum to q.  A
    solve hitting the iteration cap is flagged, the best iterate is kept and
    the pipeline continues.
    """
    settings = settings or RelaxSettings()
    horizon, q = spec.horizon, system.q
    weights = np.ones((horizon, q))
    cache = None
    reports = []
    history = []
    program = z = None
    if q == 1:
        program = build_condensed_program(
            system, spec, x0, weights, settings.gamma1, settings.gamma2
        )
        z, report = _solve_single_mode(program, settings)
        reports.append(report)
        history.append(np.ones(horizon, dtype=np.int64))
    else:
        for sweep in range(settings.reweights):
            program = build_condensed_program(
                system, spec, x0, weights, settings.gamma1, settings.gamma2
            )
            if cache is None:
                cache = groupqp.prepare(program.problem, settings.solver.rho)
            z, report = groupqp.solve(program.problem, settings.solver, cache)
            reports.append(report)
            norms = np.linalg.norm(program.blocks_of(z), axis=2)
            history.append(np.argmin(norms, axis=1).astype(np.int64) + 1)
            if sweep < settings.reweights - 1:
                weights = 1.0 / (norms + settings.epsilon)
                weights *= q / weights.sum(axis=1, keepdims=True)
    aux = AuxiliarySequence(program.blocks_of(z), weights)
    report = RelaxReport(
        solver_reports=tuple(reports),
        mode_seq_history=tuple(history),
        objective=program.objective(z),
        converged=all(r.converged for r in reports),
        z=np.asarray(z, dtype=float),
        program=program,
    )
    return aux, program.inputs_of(z), report


def project_modes(aux: AuxiliarySequence) -> np.ndarray:
    """Per step, the 1-based mode whose block has minimal norm (ties: lowest)."""
    return np.argmin(aux.norms(), axis=1).astype(np.int64) + 1


def _fixed_sequence_cost(system: SwitchedSystem, spec: CostSpec, seq0, x0) -> float:
    """Optimal cost over continuous inputs for a fixed 0-based mode sequence."""
    p = np.array(spec.psi)
    for k in range(spec.horizon - 1, -1, -1):
        a = system.a[seq0[k]]
        b = system.b[seq0[k]]
        pa = p @ a
        g = spec.r_mats[k] + b.T @ p @ b
        gain = np.linalg.solve(g, b.T @ pa)
        p = spec.q_mats[k] + a.T @ pa - pa.T @ b @ gain
        p = 0.5 * (p + p.T)
    return 0.5 * float(x0 @ p @ x0)


def refine_mode_sequence(
    system: SwitchedSystem, spec: CostSpec, mode_seq, x0, max_sweeps: int = 40
):
    """Best-improvement descent over single mode flips.

    Each candidate sequence is scored by its fixed-sequence optimal cost
    (one backward Riccati chain), so a sweep costs O(N^2 q) Riccati steps.
    Stops at a sequence no single flip improves.  Returns (sequence, cost).
    """
    horizon = spec.horizon
    seq = np.asarray(mode_seq, dtype=np.int64).copy()
    if seq.shape != (horizon,):
        raise ValueError(f"mode sequence must have length {horizon}")
    if seq.min() < 1 or seq.max() > system.q:
        raise ValueError(f"mode indices must lie in 1..{system.q}")
    seq0 = seq - 1
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    best = _fixed_sequence_cost(system, spec, seq0, x0)
    for _ in range(max_sweeps):
        improved = False
        for k in range(horizon):
            current = seq0[k]
            for i in range(system.q):
                if i == current:
                    continue
                seq0[k] = i
                cost = _fixed_sequence_cost(system, spec, seq0, x0)
                if cost < best * (1.0 - 1e-12) - 1e-300:
                    best = cost
                    current = i
                    improved = True
            seq0[k] = current
        if not improved:
            break
    return seq0 + 1, best


def mode_sequence_control(system: SwitchedSystem, spec: CostSpec, mode_seq, x0):
    """Single-chain Riccati pass for a fixed mode sequence with online reselection.

    The chain is generated backward under ``mode_seq``; during the forward
    pass the applied mode at each step re-minimizes the one-step quadratic
    against the stored chain, so it may deviate from ``mode_seq``.

    Returns (ControlSolution, chain) where chain has shape (N+1, n, n).
    """
    horizon = spec.horizon
    mode_seq = np.asarray(mode_seq, dtype=np.int64)
    if mode_seq.shape != (horizon,):
        raise ValueError(f"mode sequence must have length {horizon}")
    if mode_seq.min() < 1 or mode_seq.max() > system.q:
        raise ValueError(f"mode indices must lie in 1..{system.q}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)

    chain = np.empty((horizon + 1, system.n, system.n))
    chain[horizon] = spec.psi
    for k in range(horizon - 1, -1, -1):
        chain[k] = riccati_map(system, spec, int(mode_seq[k]), k, chain[k + 1])

    states = np.empty((horizon + 1, system.n))
    inputs = np.empty((horizon, system.n_u))
    applied = np.empty(horizon, dtype=np.int64)
    states[0] = x0
    x = x0
    for k in range(horizon):
        best_val, best_mode = np.inf, 0
        for i in range(system.q):
            val = float(x @ riccati_map(system, spec, i + 1, k, chain[k + 1]) @ x)
            if val < best_val:
                best_val, best_mode = val, i
        gain = feedback_gain(system, spec, best_mode + 1, k, chain[k + 1]).gain
        inputs[k] = -gain @ x
        applied[k] = best_mode + 1
        x = system.a[best_mode] @ x + system.b[best_mode] @ inputs[k]
        states[k + 1] = x
    trajectory = Trajectory(states, inputs, applied)
    control = ControlSolution(trajectory, evaluate_cost(spec, trajectory), "relaxed")
    return control, chain


def check_stationarity(program: CondensedProgram, z, aux: AuxiliarySequence) -> MultiplierCertificate:
    """Fit stacked multipliers to the first-order conditions of the inner solve.

    With the blocks held fixed at their solved values the remaining problem
    is an equality-constrained quadratic whose optimality system reads

        L' lam(k) = Q(k) x(k) + Abar' lam(k+1),   L' lam(N) = Psi x(N),
        u(k) = -R(k)^{-1} Bbar' lam(k+1),

    with L the stacked identity.  The multipliers are underdetermined for
    q > 1, so they are fit jointly in least squares; the returned residual
    norms measure how far the solve is from satisfying the system.  Large
    residuals are a diagnostic, not a failure.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != program.dim:
        raise ValueError(f"z has dimension {z.shape[0]}, expected {program.dim}")
    if np.max(np.abs(program.blocks_of(z) - aux.blocks)) > 1e-6 * (
        1.0 + float(np.max(np.abs(aux.blocks)))
    ):
        raise ValueError("auxiliary blocks do not match the supplied solution point")
    n, n_u, q, horizon = program.n, program.n_u, program.q, program.horizon
    spec = program.cost
    qn = q * n
    x = program.states_of(z)
    u = program.inputs_of(z)
    l_t = program.replicator.T        # (n, qn)
    a_t = program.a_stack.T           # (n, qn)
    b_t = program.b_stack.T           # (n_u, qn)

    n_adj = horizon * n
    n_inp = horizon * n_u
    mat = np.zeros((n_adj + n_inp, horizon * qn))
    rhs = np.zeros(n_adj + n_inp)
    # Multipliers lam(1)..lam(N); lam(k) occupies column block k-1.
    for k in range(1, horizon):
        row = (k - 1) * n
        mat[row : row + n, (k - 1) * qn : k * qn] = l_t
        mat[row : row + n, k * qn : (k + 1) * qn] = -a_t
        rhs[row : row + n] = spec.q_mats[k] @ x[k]
    row = (horizon - 1) * n
    mat[row : row + n, (horizon - 1) * qn : horizon * qn] = l_t
    rhs[row : row + n] = spec.psi @ x[horizon]
    # Input stationarity in input units: u(k) + R(k)^{-1} Bbar' lam(k+1) = 0.
    for k in range(horizon):
        row = n_adj + k * n_u
        mat[row : row + n_u, k * qn : (k + 1) * qn] = np.linalg.solve(spec.r_mats[k], b_t)
        rhs[row : row + n_u] = -u[k]

    lam, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    residual = mat @ lam - rhs
    return MultiplierCertificate(
        multipliers=lam.reshape(horizon, qn),
        stationarity_residual=float(np.linalg.norm(residual[n_adj:])),
        adjoint_residual=float(np.linalg.norm(residual[:n_adj])),
    )


def solve_relaxed(
    system: SwitchedSystem, spec: CostSpec, x0, settings: RelaxSettings = None
) -> RelaxedSolution:
    """Full pipeline: relax, reweight, project, refine, final online pass.

    The refinement is seeded with the projected sequence, its online-applied
    variant and the constant sequences, all refined by single-flip descent;
    the winner then feeds the stored-chain online pass.  Deterministic
    throughout.
    """
    settings = settings or RelaxSettings()
    aux, _, report = solve_relaxation(system, spec, x0, settings)
    projected = project_modes(aux)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    horizon = spec.horizon

    if system.q == 1:
        control, chain = mode_sequence_control(system, spec, projected, x0)
        return RelaxedSolution(
            mode_seq=projected,
            projected_seq=projected,
            auxiliary=aux,
            riccati_chain=chain,
            control=control,
            report=report,
        )

    seeds = [projected]
    first_pass, _ = mode_sequence_control(system, spec, projected, x0)
    seeds.append(first_pass.trajectory.mode_seq)
    for i in range(1, system.q + 1):
        seeds.append(np.full(horizon, i, dtype=np.int64))

    best_seq, best_cost = None, np.inf
    for seed in seeds:
        candidate, cost = refine_mode_sequence(system, spec, seed, x0)
        if cost < best_cost:
            best_seq, best_cost = candidate, cost
    # The online pass may itself deviate; if the deviation is a strictly
    # better fixed sequence, refine once more from there.
    for _ in range(4):
        control, chain = mode_sequence_control(system, spec, best_seq, x0)
        applied = control.trajectory.mode_seq
        if np.array_equal(applied, best_seq):
            break
        candidate, cost = refine_mode_sequence(system, spec, applied, x0)
        if cost < best_cost * (1.0 - 1e-12):
            best_seq, best_cost = candidate, cost
        else:
            break
    control, chain = mode_sequence_control(system, spec, best_seq, x0)
    return RelaxedSolution(
        mode_seq=best_seq,
        projected_seq=projected,
        auxiliary=aux,
        riccati_chain=chain,
        control=control,
        report=report,
    )


def reconstruct_blocks(system: SwitchedSystem, trajectory: Trajectory) -> np.ndarray:
    """Mode-gap blocks of an arbitrary trajectory: f_i(k) = x(k+1) - A_i x(k) - B_i u(k)."""
    x = trajectory.states
    u = trajectory.inputs
    blocks = np.empty((trajectory.horizon, system.q, system.n))
    for i in range(system.q):
        blocks[:, i, :] = x[1:] - x[:-1] @ system.a[i].T - u @ system.b[i].T
    return blocks
