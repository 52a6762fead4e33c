"""Finite-horizon quadratic optimal control of discrete-time switched linear systems.

Two solution paths over the same domain types: an exact dynamic-programming
solver whose value sets grow exponentially with the horizon, and a
polynomial-time pipeline that relaxes the mode choice into a block-sparse
convex program, projects back onto the modes and re-solves.  A benchmark
harness measures the gap between the two on random instance families.
"""

from .core import (
    CapacityError,
    ControlSolution,
    CostSpec,
    NumericError,
    SwitchedSystem,
    Trajectory,
    evaluate_cost,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    simulate,
    validate_solution,
    validate_trajectory,
)
from .exact import (
    FeedbackGain,
    RiccatiSet,
    brute_force_solve,
    build_value_sets,
    exact_online_control,
    feedback_gain,
    load_value_sets,
    riccati_map,
    save_value_sets,
    value_at,
)
from .groupqp import (
    GroupLassoQP,
    NormGroup,
    SolverReport,
    SolverSettings,
    block_soft_threshold,
)
from .relaxed import (
    AuxiliarySequence,
    CondensedProgram,
    MultiplierCertificate,
    RelaxedSolution,
    RelaxSettings,
    build_condensed_program,
    check_stationarity,
    mode_sequence_control,
    project_modes,
    solve_relaxation,
    solve_relaxed,
)
from .bench import (
    ExperimentReport,
    RandomSystemConfig,
    generate_random_system,
    run_experiment,
    threshold_table,
)

__version__ = "0.1.0"
