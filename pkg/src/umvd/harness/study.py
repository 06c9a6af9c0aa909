"""Monte-Carlo ratio studies of the pivot rounding.

One *trial* is one generated instance: its relaxation is solved once and then
rounded ``runs_per_instance`` times with independent seeds.  The trial's
``alg_cost`` is the mean over those runs, an unbiased estimate of the
expected cost the guarantees talk about.  Aggregates (means, standard errors)
are taken across trials.

Every trial owns its random stream, derived from ``(seed, trial index)``
through :class:`numpy.random.SeedSequence`, so trials can run in any order or
in parallel and the report does not change.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from ..instance import Mode, disagreement_cost, is_ultrametric
from ..lp import LPBudgetError, edge_costs, solve_instance
from ..oracle import OracleBudgetError, exact_opt
from ..pivot import Rounder
from ..simplex import SimplexError
from .audit import AuditTables, InvariantTally, PartitionTally, audit_trace, classify_triangles, partition_events
from .generators import generate_planted

__all__ = [
    "DEFAULT_PARAMETERS",
    "GOLDEN_ALPHA",
    "guarantee",
    "resolve_parameters",
    "StudyConfig",
    "TrialRecord",
    "RatioReport",
    "ratio_study",
]

GOLDEN_ALPHA = (3 - math.sqrt(5)) / 2
DEFAULT_PARAMETERS = {
    Mode.COMPLETE: (Fraction(2, 5), Fraction(0)),
    Mode.WEIGHTED: (Fraction(1, 3), Fraction(0)),
    Mode.KPARTITE: (Fraction(3, 8), Fraction(2, 3)),
}
_ZERO = 1e-9


def guarantee(mode, alpha, beta) -> tuple[float | None, str | None]:
    """Proven approximation factor for these parameters, and a warning if none applies.

    Weighted mode has an ``O(min(L, log n))`` guarantee with no explicit
    constant, reported as ``(None, None)``.
    """
    mode = Mode(mode)
    a, b = float(alpha), float(beta)
    if mode is Mode.COMPLETE:
        if b == 0 and GOLDEN_ALPHA - 1e-12 <= a <= 0.5:
            return max(3 / (1 - a), 2 / a), None
        return None, (
            f"no proven guarantee for complete mode at alpha={a:g}, beta={b:g} "
            "(needs beta=0 and alpha in [(3-sqrt 5)/2, 1/2])"
        )
    if mode is Mode.WEIGHTED:
        if abs(a - 1 / 3) < 1e-12 and b == 0:
            return None, None
        return None, f"no proven guarantee for weighted mode at alpha={a:g}, beta={b:g} (needs 1/3, 0)"
    if abs(a - 3 / 8) < 1e-12 and abs(b - 2 / 3) < 1e-12:
        return 16.0, None
    return None, f"no proven guarantee for k-partite mode at alpha={a:g}, beta={b:g} (needs 3/8, 2/3)"


def resolve_parameters(mode, alpha=None, beta=None) -> tuple[Fraction, Fraction]:
    """Fill in the mode defaults for unset ``alpha``/``beta``."""
    da, db = DEFAULT_PARAMETERS[Mode(mode)]
    a = da if alpha is None else (alpha if isinstance(alpha, Fraction) else Fraction(alpha))
    b = db if beta is None else (beta if isinstance(beta, Fraction) else Fraction(beta))
    return a, b


@dataclass(frozen=True)
class StudyConfig:
    mode: str = "complete"
    alpha: float | None = None
    beta: float | None = None
    kind: str = "perturbed_ultrametric"
    n: int = 10
    L: int = 3
    k: int = 1
    p: float = 0.5
    parts: int = 3
    trials: int = 100
    seed: int = 0
    runs_per_instance: int = 1
    oracle_budget: int | None = None
    audit: bool = False
    force_random: bool = False


@dataclass
class TrialRecord:
    trial: int
    instance_seed: int
    n: int
    L: int
    lp_bound: float | None = None
    alg_cost: float | None = None  # mean over the runs of this trial
    alg_min: float | None = None
    alg_max: float | None = None
    runs: int = 0
    opt_cost: float | None = None
    certificate: float | None = None
    valid: bool = True  # every run produced an ultrametric with a consistent cost
    sandwich_ok: bool | None = None
    failed: str | None = None

    @property
    def perfect(self) -> bool:
        return self.failed is None and self.lp_bound is not None and self.lp_bound <= _ZERO

    @property
    def ratio_lp(self) -> float | None:
        if self.failed or self.lp_bound is None or self.lp_bound <= _ZERO:
            return None
        return self.alg_cost / self.lp_bound

    @property
    def ratio_opt(self) -> float | None:
        if self.failed or self.opt_cost is None or self.opt_cost <= _ZERO:
            return None
        return self.alg_cost / self.opt_cost


def _mean_se(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    a = np.asarray(values, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
    return float(a.mean()), se


@dataclass
class RatioReport:
    config: StudyConfig
    alpha: float
    beta: float
    guarantee: float | None
    warnings: list[str] = field(default_factory=list)
    trials: list[TrialRecord] = field(default_factory=list)
    invariants: InvariantTally | None = None
    partition: PartitionTally | None = None
    triangles: Counter = field(default_factory=Counter)
    triangle_flags: int = 0
    triangle_count_mismatches: int = 0

    def merge(self, other: "RatioReport") -> "RatioReport":
        """Fold another report over the same configuration into this one."""
        self.trials = sorted(self.trials + other.trials, key=lambda r: r.trial)
        if other.invariants is not None:
            self.invariants = (self.invariants or InvariantTally()).merge(other.invariants)
        if other.partition is not None:
            self.partition = (self.partition or PartitionTally()).merge(other.partition)
        self.triangles.update(other.triangles)
        self.triangle_flags += other.triangle_flags
        self.triangle_count_mismatches += other.triangle_count_mismatches
        return self

    @property
    def ok_trials(self) -> list[TrialRecord]:
        return [t for t in self.trials if t.failed is None]

    @property
    def failed_trials(self) -> list[TrialRecord]:
        return [t for t in self.trials if t.failed is not None]

    @property
    def perfect_trials(self) -> int:
        return sum(t.perfect for t in self.trials)

    def cost_stats(self) -> tuple[float, float]:
        return _mean_se([t.alg_cost for t in self.ok_trials])

    def ratio_lp_stats(self) -> tuple[float, float]:
        return _mean_se([t.ratio_lp for t in self.ok_trials if t.ratio_lp is not None])

    def ratio_opt_stats(self) -> tuple[float, float]:
        return _mean_se([t.ratio_opt for t in self.ok_trials if t.ratio_opt is not None])

    def summary(self) -> dict:
        cost, cost_se = self.cost_stats()
        rl, rl_se = self.ratio_lp_stats()
        ro, ro_se = self.ratio_opt_stats()
        ratios = [t.ratio_lp for t in self.ok_trials if t.ratio_lp is not None]
        out = {
            "parameters": asdict(self.config) | {"alpha": self.alpha, "beta": self.beta},
            "guarantee": self.guarantee,
            "warnings": list(self.warnings),
            "trials": len(self.trials),
            "failed_trials": len(self.failed_trials),
            "perfect_trials": self.perfect_trials,
            "invalid_trials": sum(not t.valid for t in self.trials),
            "sandwich_violations": sum(t.sandwich_ok is False for t in self.trials),
            "mean_cost": cost,
            "stderr_cost": cost_se,
            "mean_ratio_lp": rl,
            "stderr_ratio_lp": rl_se,
            "max_ratio_lp": max(ratios) if ratios else None,
            "ratio_lp_trials": len(ratios),
            "mean_ratio_opt": ro,
            "stderr_ratio_opt": ro_se,
            "ratio_opt_trials": sum(t.ratio_opt is not None for t in self.ok_trials),
        }
        if self.invariants is not None:
            out["invariant_checks"] = dict(self.invariants.checks)
            out["invariant_violations"] = dict(self.invariants.violations)
        if self.partition is not None:
            out["partition_events"] = {b.value: v for b, v in self.partition.events.items()}
            out["partition_splits"] = {b.value: v for b, v in self.partition.splits.items()}
        if self.triangles:
            out["triangles"] = {c.value: v for c, v in self.triangles.items()}
            out["triangle_flags"] = self.triangle_flags
        return out


def _trial_seeds(seed: int, trial: int, runs: int) -> tuple[int, list[int]]:
    state = np.random.SeedSequence([seed, trial]).generate_state(1 + runs, dtype=np.uint64)
    return int(state[0]), [int(s) for s in state[1:]]


def _run_trial(cfg: StudyConfig, alpha: Fraction, beta: Fraction, trial: int) -> RatioReport:
    mode = Mode(cfg.mode)
    inst_seed, run_seeds = _trial_seeds(cfg.seed, trial, cfg.runs_per_instance)
    kind = "kpartite_perturbed" if mode is Mode.KPARTITE else cfg.kind
    part = RatioReport(cfg, float(alpha), float(beta), None)
    gen = generate_planted(kind, cfg.n, cfg.L, cfg.k, cfg.p, inst_seed, cfg.parts, weighted=mode is Mode.WEIGHTED)
    inst = gen.instance
    rec = TrialRecord(trial, inst_seed, inst.n, inst.ladder().L, certificate=gen.certificate)
    part.trials.append(rec)
    try:
        y = solve_instance(inst)
    except (SimplexError, LPBudgetError) as exc:
        rec.failed = f"{type(exc).__name__}: {exc}"
        return part
    rec.lp_bound = edge_costs(inst, y, alpha).lp_lower_bound
    if cfg.oracle_budget:
        try:
            rec.opt_cost = exact_opt(inst, budget=cfg.oracle_budget).opt_cost
        except OracleBudgetError:
            pass
    rounder = Rounder(inst, y, alpha, beta, force_random=cfg.force_random)
    tables = AuditTables(inst, y, alpha, beta) if cfg.audit else None
    if tables is not None:
        part.invariants, part.partition = InvariantTally(), PartitionTally()
    costs = []
    for s in run_seeds:
        res = rounder.run(s, trace=tables is not None)
        u = res.ultrametric
        rec.valid &= (inst.n < 3 or is_ultrametric(u)) and res.cost == disagreement_cost(inst, u)
        costs.append(res.cost)
        if tables is not None:
            audit_trace(tables, res.trace, force_random=cfg.force_random, tally=part.invariants)
            if not cfg.force_random:
                partition_events(tables, res.trace, part.partition)
            census = classify_triangles(tables, res.trace)
            part.triangles.update(census.totals)
            part.triangle_flags += len(census.flagged)
            part.triangle_count_mismatches += sum(
                sum(c.values()) != math.comb(size - 1, 2) for c, size in zip(census.per_frame, census.frame_sizes)
            )
    rec.runs = len(costs)
    rec.alg_cost = float(np.mean(costs))
    rec.alg_min, rec.alg_max = float(min(costs)), float(max(costs))
    if rec.opt_cost is not None:
        rec.sandwich_ok = rec.lp_bound <= rec.opt_cost + 1e-6 and all(c >= rec.opt_cost - 1e-9 for c in costs)
    return part


def _run_trial_star(args):
    return _run_trial(*args)


def ratio_study(cfg: StudyConfig | None = None, jobs: int = 1, **overrides) -> RatioReport:
    """Run ``cfg.trials`` trials and aggregate them into a :class:`RatioReport`.

    Keyword overrides replace fields of ``cfg`` (or of the default config).
    Off-regime ``alpha``/``beta`` values are allowed but produce a warning.
    """
    cfg = StudyConfig(**(asdict(cfg) if cfg else {}) | overrides)
    mode = Mode(cfg.mode)
    if cfg.trials < 1 or cfg.runs_per_instance < 1:
        raise ValueError("trials and runs_per_instance must be positive")
    alpha, beta = resolve_parameters(mode, cfg.alpha, cfg.beta)
    g, warn = guarantee(mode, alpha, beta)
    report = RatioReport(cfg, float(alpha), float(beta), g)
    if warn:
        warnings.warn(warn, stacklevel=2)
        report.warnings.append(warn)
    if cfg.audit:
        report.invariants, report.partition = InvariantTally(), PartitionTally()
    tasks = [(cfg, alpha, beta, t) for t in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_trial_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        parts = [_run_trial(*t) for t in tasks]
    for part in parts:
        report.merge(part)
    return report
