"""Random instance generation and the exact-versus-relaxed comparison study.

Instances are generated deterministically from (seed, instance index): each
mode's A matrix is drawn standard normal and rescaled to a spectral radius
sampled from ``spectral_radius_range``, B is standard normal, and x0 is
zero-mean Gaussian with covariance ``x0_covariance * I``.  For every
instance the study records the exact optimum, the relaxed pipeline's cost,
the relative error eps = (J_rel - J_opt) / J_opt, the mode-sequence Hamming
distance and wall-clock timings, then aggregates the fraction of instances
below each error threshold.
"""

import concurrent.futures
import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .core import CostSpec, NumericError, SwitchedSystem, evaluate_cost
from .exact import build_value_sets, exact_online_control
from .relaxed import RelaxSettings, solve_relaxed

__all__ = [
    "RandomSystemConfig",
    "InstanceRecord",
    "ExperimentReport",
    "generate_random_system",
    "run_experiment",
    "threshold_table",
]

# Exact-coincidence thresholds: an alpha of 0 means eps <= ZERO_THRESHOLD.
ZERO_THRESHOLD = 1e-12
EPS_FLOOR = -1e-9


@dataclass(frozen=True)
class RandomSystemConfig:
    """Parameters of the random instance family."""

    n: int
    q: int
    horizon: int
    count: int = 100
    seed: int = 0
    n_u: int = 1
    spectral_radius_range: tuple = (0.5, 0.95)
    x0_covariance: float = 20.0
    allow_unstable: bool = False

    def __post_init__(self):
        if self.n < 1 or self.q < 1 or self.horizon < 1 or self.n_u < 1:
            raise ValueError("dimensions and horizon must be positive")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        low, high = self.spectral_radius_range
        if not 0 < low <= high:
            raise ValueError("spectral radius range must satisfy 0 < low <= high")
        if not self.allow_unstable and high > 1:
            raise ValueError("high > 1 requires allow_unstable")
        if self.x0_covariance <= 0:
            raise ValueError("x0 covariance must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "RandomSystemConfig":
        known = {
            "n", "q", "N", "count", "seed", "n_u",
            "spectral_radius_range", "x0_covariance", "allow_unstable",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "N" in kwargs:
            kwargs["horizon"] = int(kwargs.pop("N"))
        if "spectral_radius_range" in kwargs:
            kwargs["spectral_radius_range"] = tuple(kwargs["spectral_radius_range"])
        return cls(**kwargs)


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: str
    j_opt: float
    j_rel: float
    eps: float
    hamming: int
    t_exact_ms: float
    t_relaxed_ms: float
    t_build_ms: float
    t_online_ms: float
    converged: bool


@dataclass(frozen=True)
class ExperimentReport:
    config: RandomSystemConfig
    thresholds: tuple
    records: tuple
    settings: RelaxSettings = field(default_factory=RelaxSettings)

    @property
    def eps_values(self) -> np.ndarray:
        return np.asarray([r.eps for r in self.records])


def generate_random_system(config: RandomSystemConfig, instance_index: int):
    """Deterministic (SwitchedSystem, x0) draw for one instance index."""
    if instance_index < 0:
        raise ValueError("instance index must be nonnegative")
    rng = np.random.default_rng([config.seed, instance_index])
    low, high = config.spectral_radius_range
    a_list, b_list = [], []
    for _ in range(config.q):
        for attempt in range(100):
            a = rng.standard_normal((config.n, config.n))
            radius = float(np.max(np.abs(np.linalg.eigvals(a))))
            if radius > 0:
                break
        else:
            raise NumericError("could not draw a mode matrix with nonzero spectral radius")
        target = rng.uniform(low, high)
        a_list.append(a * (target / radius))
        b_list.append(rng.standard_normal((config.n, config.n_u)))
    x0 = rng.normal(0.0, np.sqrt(config.x0_covariance), config.n)
    return SwitchedSystem(np.stack(a_list), np.stack(b_list)), x0


def _run_instance(config: RandomSystemConfig, settings: RelaxSettings, idx: int) -> InstanceRecord:
    system, x0 = generate_random_system(config, idx)
    spec = CostSpec.constant(np.eye(config.n), np.eye(config.n_u), config.horizon)

    t0 = time.perf_counter()
    sets = build_value_sets(system, spec)
    t1 = time.perf_counter()
    exact = exact_online_control(system, spec, sets, x0)
    t2 = time.perf_counter()
    relaxed = solve_relaxed(system, spec, x0, settings)
    t3 = time.perf_counter()

    j_opt = exact.cost
    j_rel = relaxed.control.cost
    recheck = evaluate_cost(spec, relaxed.control.trajectory)
    if abs(recheck - j_rel) > 1e-9 * (1.0 + abs(recheck)):
        raise NumericError("relaxed cost disagrees with its own trajectory")
    if j_opt <= ZERO_THRESHOLD and j_rel <= ZERO_THRESHOLD:
        eps = 0.0
    else:
        eps = (j_rel - j_opt) / j_opt
    if eps < EPS_FLOOR:
        raise NumericError(
            f"instance {idx}: relaxed cost beat the exact optimum (eps = {eps:.3e})"
        )
    hamming = int(np.sum(exact.trajectory.mode_seq != relaxed.control.trajectory.mode_seq))
    return InstanceRecord(
        instance_id=f"{config.seed}-{idx:04d}",
        j_opt=j_opt,
        j_rel=j_rel,
        eps=eps,
        hamming=hamming,
        t_exact_ms=(t2 - t0) * 1e3,
        t_relaxed_ms=(t3 - t2) * 1e3,
        t_build_ms=(t1 - t0) * 1e3,
        t_online_ms=(t2 - t1) * 1e3,
        converged=relaxed.report.converged,
    )


def run_experiment(
    config: RandomSystemConfig,
    thresholds,
    settings: RelaxSettings = None,
    csv_path=None,
    json_path=None,
    jobs: int = 1,
) -> ExperimentReport:
    """Run both solvers on every instance; optionally write CSV and JSON.

    Instances are independent; with ``jobs > 1`` they run in worker
    processes, gathered in index order so the output does not depend on
    scheduling.
    """
    settings = settings or RelaxSettings()
    thresholds = tuple(float(t) for t in thresholds)
    indices = range(config.count)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_instance, *zip(*[(config, settings, i) for i in indices])))
    else:
        records = [_run_instance(config, settings, i) for i in indices]
    report = ExperimentReport(
        config=config, thresholds=thresholds, records=tuple(records), settings=settings
    )
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(render_csv(report))
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report_to_dict(report), fh, indent=2)
            fh.write("\n")
    return report


def threshold_table(report: ExperimentReport, thresholds=None):
    """Rows (alpha, fraction of instances with eps <= alpha); alpha 0 means exact."""
    thresholds = report.thresholds if thresholds is None else tuple(float(t) for t in thresholds)
    eps = report.eps_values
    rows = []
    for alpha in thresholds:
        cut = ZERO_THRESHOLD if alpha == 0 else alpha
        rows.append((alpha, float(np.mean(eps <= cut))))
    return rows


def render_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "J_opt", "J_rel", "eps", "hamming", "t_exact_ms", "t_relaxed_ms"])
    for r in report.records:
        writer.writerow(
            [r.instance_id, repr(r.j_opt), repr(r.j_rel), repr(r.eps), r.hamming,
             f"{r.t_exact_ms:.3f}", f"{r.t_relaxed_ms:.3f}"]
        )
    return buf.getvalue()


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "config": {
            "n": report.config.n,
            "q": report.config.q,
            "N": report.config.horizon,
            "count": report.config.count,
            "seed": report.config.seed,
            "n_u": report.config.n_u,
            "spectral_radius_range": list(report.config.spectral_radius_range),
            "x0_covariance": report.config.x0_covariance,
        },
        "settings": report.settings.to_dict(),
        "threshold_table": [
            {"alpha": alpha, "fraction": frac} for alpha, frac in threshold_table(report)
        ],
        "instances": [
            {
                "id": r.instance_id,
                "J_opt": r.j_opt,
                "J_rel": r.j_rel,
                "eps": r.eps,
                "hamming": r.hamming,
                "converged": r.converged,
                "timings_ms": {
                    "value_set_build": r.t_build_ms,
                    "exact_online": r.t_online_ms,
                    "relaxed_pipeline": r.t_relaxed_ms,
                },
            }
            for r in report.records
        ],
    }
