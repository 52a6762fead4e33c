"""Domain types for switched linear systems, simulation and cost evaluation.

A switched linear system steps as ``x(k+1) = A[s] x(k) + B[s] u(k)`` where
``s = sigma(k)`` picks one of q linear subsystems ("modes").  The quadratic
performance index over a horizon of N steps is

    J = 1/2 x(N)' Psi x(N) + 1/2 sum_k [ x(k)' Q(k) x(k) + u(k)' R(k) u(k) ].

Mode indices are 1-based in every public interface (modes are 1..q); internal
arrays are 0-based.  All types are immutable after construction and all
operations are pure functions.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CapacityError",
    "NumericError",
    "SwitchedSystem",
    "CostSpec",
    "Trajectory",
    "ControlSolution",
    "simulate",
    "evaluate_cost",
    "validate_trajectory",
    "validate_solution",
    "problem_from_dict",
    "problem_to_dict",
    "load_problem",
    "content_hash",
]

# Ingestion tolerances for the weight matrices.
SYMMETRY_TOL = 1e-8
Q_PSD_FLOOR = -1e-10
R_PD_FLOOR = 1e-12


class CapacityError(RuntimeError):
    """A configured capacity cap (value-set size, enumeration count) was exceeded."""


class NumericError(RuntimeError):
    """A factorization failed on input that should have been well posed."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _require_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class SwitchedSystem:
    """A set of q discrete-time linear modes sharing state/input dimensions.

    Attributes:
        a: stacked state matrices, shape (q, n, n).
        b: stacked input matrices, shape (q, n, n_u).
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise ValueError(f"mode A stack must have shape (q, n, n), got {a.shape}")
        if b.ndim != 3 or b.shape[0] != a.shape[0] or b.shape[1] != a.shape[1]:
            raise ValueError(
                f"mode B stack must have shape (q, n, n_u) matching A, got {b.shape}"
            )
        if a.shape[0] < 1:
            raise ValueError("at least one mode is required")
        _require_finite(a, "A")
        _require_finite(b, "B")
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "b", _readonly(b))

    @classmethod
    def from_modes(cls, modes) -> "SwitchedSystem":
        """Build from an ordered list of (A_i, B_i) pairs (mode 1 first)."""
        if len(modes) < 1:
            raise ValueError("at least one mode is required")
        a_list, b_list = [], []
        for pair in modes:
            ai, bi = pair
            ai = np.atleast_2d(np.asarray(ai, dtype=float))
            bi = np.asarray(bi, dtype=float)
            if bi.ndim == 1:
                bi = bi[:, None]
            a_list.append(ai)
            b_list.append(bi)
        return cls(np.stack(a_list), np.stack(b_list))

    @property
    def q(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def n_u(self) -> int:
        return self.b.shape[2]

    @property
    def modes(self):
        """Ordered list of (A_i, B_i) pairs, 1-based mode i at position i-1."""
        return [(self.a[i], self.b[i]) for i in range(self.q)]


def _ingest_weight_stack(mats, count, dim, name, pd: bool):
    arr = np.asarray(mats, dtype=float)
    if arr.shape != (count, dim, dim):
        raise ValueError(f"{name} must have shape ({count}, {dim}, {dim}), got {arr.shape}")
    _require_finite(arr, name)
    asym = np.max(np.abs(arr - arr.transpose(0, 2, 1))) if arr.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"{name} asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e}")
    arr = 0.5 * (arr + arr.transpose(0, 2, 1))
    eigs = np.linalg.eigvalsh(arr)
    if pd:
        if eigs.min() <= R_PD_FLOOR:
            raise ValueError(f"{name} must be positive definite (min eig {eigs.min():.3e})")
    else:
        if eigs.min() < Q_PSD_FLOOR:
            raise ValueError(f"{name} must be positive semidefinite (min eig {eigs.min():.3e})")
    return arr


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage/terminal weights over a horizon of N steps.

    ``q_mats`` holds Q(0)..Q(N) with Q(N) identified with the terminal weight;
    ``r_mats`` holds R(0)..R(N-1).  Inputs are symmetrized on ingestion;
    asymmetry beyond 1e-8 is rejected.
    """

    q_mats: np.ndarray
    r_mats: np.ndarray

    def __post_init__(self):
        q_arr = np.asarray(self.q_mats, dtype=float)
        r_arr = np.asarray(self.r_mats, dtype=float)
        if q_arr.ndim != 3 or r_arr.ndim != 3:
            raise ValueError("weight sequences must be stacks of square matrices")
        horizon = q_arr.shape[0] - 1
        if horizon < 1:
            raise ValueError("horizon must be at least 1 step")
        if r_arr.shape[0] != horizon:
            raise ValueError(
                f"expected {horizon} input weights for {horizon + 1} state weights, "
                f"got {r_arr.shape[0]}"
            )
        q_arr = _ingest_weight_stack(q_arr, horizon + 1, q_arr.shape[1], "Q", pd=False)
        r_arr = _ingest_weight_stack(r_arr, horizon, r_arr.shape[1], "R", pd=True)
        object.__setattr__(self, "q_mats", _readonly(q_arr))
        object.__setattr__(self, "r_mats", _readonly(r_arr))

    @classmethod
    def constant(cls, q_mat, r_mat, horizon: int, terminal=None) -> "CostSpec":
        """Constant weights over the horizon; terminal defaults to the state weight."""
        q_mat = np.atleast_2d(np.asarray(q_mat, dtype=float))
        r_mat = np.atleast_2d(np.asarray(r_mat, dtype=float))
        terminal = q_mat if terminal is None else np.atleast_2d(np.asarray(terminal, dtype=float))
        q_stack = np.concatenate([np.repeat(q_mat[None], horizon, axis=0), terminal[None]])
        return cls(q_stack, np.repeat(r_mat[None], horizon, axis=0))

    @property
    def horizon(self) -> int:
        return self.q_mats.shape[0] - 1

    @property
    def n(self) -> int:
        return self.q_mats.shape[1]

    @property
    def n_u(self) -> int:
        return self.r_mats.shape[1]

    @property
    def psi(self) -> np.ndarray:
        """Terminal weight Q(N)."""
        return self.q_mats[self.horizon]


@dataclass(frozen=True)
class Trajectory:
    """States x(0)..x(N), inputs u(0)..u(N-1) and the applied 1-based modes."""

    states: np.ndarray
    inputs: np.ndarray
    mode_seq: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        modes = np.asarray(self.mode_seq, dtype=np.int64)
        if modes.ndim != 1:
            raise ValueError("mode sequence must be one-dimensional")
        horizon = modes.shape[0]
        if horizon < 1:
            raise ValueError("trajectory must cover at least one step")
        if states.shape[0] != horizon + 1:
            raise ValueError(
                f"expected {horizon + 1} states for {horizon} steps, got {states.shape[0]}"
            )
        if inputs.shape[0] != horizon:
            raise ValueError(f"expected {horizon} inputs, got {inputs.shape[0]}")
        _require_finite(states, "states")
        _require_finite(inputs, "inputs")
        if modes.min() < 1:
            raise ValueError("mode indices are 1-based and must be >= 1")
        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "inputs", _readonly(inputs))
        modes = modes.copy()
        modes.setflags(write=False)
        object.__setattr__(self, "mode_seq", modes)

    @property
    def horizon(self) -> int:
        return self.mode_seq.shape[0]


@dataclass(frozen=True)
class ControlSolution:
    """A trajectory with its achieved cost and the solver that produced it."""

    trajectory: Trajectory
    cost: float
    solver_tag: str = field(default="exact-dp")

    def __post_init__(self):
        if self.solver_tag not in ("exact-dp", "brute-force", "relaxed"):
            raise ValueError(f"unknown solver tag {self.solver_tag!r}")
        if not np.isfinite(self.cost):
            raise ValueError("cost must be finite")


def simulate(system: SwitchedSystem, x0, inputs, mode_seq) -> Trajectory:
    """Roll the switched dynamics forward from x0 under given inputs and modes.

    Parameters:
        x0: initial state, length n.
        inputs: sequence of N input vectors (length n_u each).
        mode_seq: sequence of N 1-based mode indices.

    Returns the unique trajectory obeying the dynamics step by step.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != system.n:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {system.n}")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    modes = np.asarray(mode_seq, dtype=np.int64)
    if modes.ndim != 1 or modes.shape[0] < 1:
        raise ValueError("mode sequence must be a non-empty 1-d sequence")
    horizon = modes.shape[0]
    if inputs.shape != (horizon, system.n_u):
        raise ValueError(
            f"inputs must have shape ({horizon}, {system.n_u}), got {inputs.shape}"
        )
    if modes.min() < 1 or modes.max() > system.q:
        raise ValueError(f"mode indices must lie in 1..{system.q}")
    _require_finite(x0, "x0")
    _require_finite(inputs, "inputs")

    states = np.empty((horizon + 1, system.n))
    states[0] = x0
    for k in range(horizon):
        s = modes[k] - 1
        states[k + 1] = system.a[s] @ states[k] + system.b[s] @ inputs[k]
    return Trajectory(states, inputs, modes)


def evaluate_cost(spec: CostSpec, trajectory: Trajectory) -> float:
    """Quadratic index of a trajectory: terminal plus running state/input terms."""
    horizon = spec.horizon
    if trajectory.horizon != horizon:
        raise ValueError(
            f"trajectory covers {trajectory.horizon} steps, cost spec expects {horizon}"
        )
    x = trajectory.states
    u = trajectory.inputs
    total = x[horizon] @ spec.psi @ x[horizon]
    for k in range(horizon):
        total += x[k] @ spec.q_mats[k] @ x[k] + u[k] @ spec.r_mats[k] @ u[k]
    return 0.5 * float(total)


def validate_trajectory(system: SwitchedSystem, trajectory: Trajectory, tol: float = 1e-10) -> None:
    """Check dynamics consistency entrywise; raises ValueError on violation."""
    if trajectory.mode_seq.max() > system.q:
        raise ValueError(f"mode indices must lie in 1..{system.q}")
    for k in range(trajectory.horizon):
        s = trajectory.mode_seq[k] - 1
        predicted = system.a[s] @ trajectory.states[k] + system.b[s] @ trajectory.inputs[k]
        err = np.max(np.abs(predicted - trajectory.states[k + 1]))
        if err > tol:
            raise ValueError(f"dynamics violated at step {k}: max entry error {err:.3e}")


def validate_solution(spec: CostSpec, solution: ControlSolution, rel_tol: float = 1e-9) -> None:
    """Check the stored cost against a re-evaluation of the embedded trajectory."""
    actual = evaluate_cost(spec, solution.trajectory)
    if abs(actual - solution.cost) > rel_tol * (1.0 + abs(actual)):
        raise ValueError(
            f"stored cost {solution.cost!r} disagrees with re-evaluated cost {actual!r}"
        )


# ---------------------------------------------------------------------------
# JSON problem interface
#
# Top-level keys: "modes" (array of {"A": rows, "B": rows}), "N", "Q" (single
# matrix or array of N+1), "R" (single matrix or array of N), "x0".  A single
# matrix expands to a constant sequence.  Unknown keys are rejected.
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {"modes", "N", "Q", "R", "x0"}


def _expand_weight(value, count, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 2:
        return np.repeat(arr[None], count, axis=0)
    if arr.ndim == 3:
        if arr.shape[0] != count:
            raise ValueError(f"{name} sequence must have length {count}, got {arr.shape[0]}")
        return arr
    raise ValueError(f"{name} must be a matrix or a sequence of matrices")


def problem_from_dict(data: dict):
    """Parse a problem dict into (SwitchedSystem, CostSpec, x0)."""
    if not isinstance(data, dict):
        raise ValueError("problem document must be a JSON object")
    unknown = set(data) - _PROBLEM_KEYS
    if unknown:
        raise ValueError(f"unknown problem keys: {sorted(unknown)}")
    missing = _PROBLEM_KEYS - set(data)
    if missing:
        raise ValueError(f"missing problem keys: {sorted(missing)}")
    modes = data["modes"]
    if not isinstance(modes, list) or not modes:
        raise ValueError("'modes' must be a non-empty array")
    pairs = []
    for idx, entry in enumerate(modes):
        if not isinstance(entry, dict) or set(entry) != {"A", "B"}:
            raise ValueError(f"mode {idx + 1} must be an object with keys 'A' and 'B'")
        pairs.append((entry["A"], entry["B"]))
    system = SwitchedSystem.from_modes(pairs)
    horizon = int(data["N"])
    if horizon < 1:
        raise ValueError("'N' must be a positive integer")
    q_stack = _expand_weight(data["Q"], horizon + 1, "Q")
    r_stack = _expand_weight(data["R"], horizon, "R")
    spec = CostSpec(q_stack, r_stack)
    if spec.n != system.n or spec.n_u != system.n_u:
        raise ValueError("weight dimensions do not match the system dimensions")
    x0 = np.asarray(data["x0"], dtype=float).reshape(-1)
    if x0.shape[0] != system.n:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {system.n}")
    return system, spec, x0


def problem_to_dict(system: SwitchedSystem, spec: CostSpec, x0) -> dict:
    return {
        "modes": [
            {"A": system.a[i].tolist(), "B": system.b[i].tolist()} for i in range(system.q)
        ],
        "N": spec.horizon,
        "Q": spec.q_mats.tolist(),
        "R": spec.r_mats.tolist(),
        "x0": np.asarray(x0, dtype=float).reshape(-1).tolist(),
    }


def load_problem(path):
    """Load (SwitchedSystem, CostSpec, x0) from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return problem_from_dict(data)


def content_hash(system: SwitchedSystem, spec: CostSpec, *extras) -> str:
    """Deterministic hex digest of a (system, cost) pair plus optional scalars."""
    h = hashlib.sha256()
    h.update(b"swlq-problem-v1")
    h.update(struct.pack("<qqqq", system.q, system.n, system.n_u, spec.horizon))
    h.update(np.ascontiguousarray(system.a).tobytes())
    h.update(np.ascontiguousarray(system.b).tobytes())
    h.update(np.ascontiguousarray(spec.q_mats).tobytes())
    h.update(np.ascontiguousarray(spec.r_mats).tobytes())
    for value in extras:
        h.update(struct.pack("<d", float(value)))
    return h.hexdigest()
