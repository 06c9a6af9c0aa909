"""Acceptance suite: one test per criterion, each tagged ``acceptance(<number>)``.

Every test attaches a one-line summary through ``record_property("detail", ...)``
and the terminal-summary hook in ``conftest.py`` prints one PASS/FAIL line per
criterion at the end of the run.

The ratio studies of criteria 1-6 run with auditing on; their invariant and
partition tallies are cached at module level and reused by criteria 7 and 9.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from umvd.harness.audit import Bucket, InvariantTally, PartitionTally, partition_probability_audit
from umvd.harness.generators import generate
from umvd.harness.study import GOLDEN_ALPHA, StudyConfig, ratio_study
from umvd.instance import instance_from_levels, is_ultrametric
from umvd.lp import LevelSolution, edge_costs
from umvd.oracle import exact_opt, exact_opt_bruteforce
from umvd.pivot import Rounder, classify_pivot_edge, sample_pivot_distance, truncate

F = Fraction
MODES = ("complete", "weighted", "kpartite")

_STUDIES: dict[str, list] = {}


def _study(name, configs):
    """Run (once) and cache a list of audited ratio studies under ``name``."""
    if name not in _STUDIES:
        _STUDIES[name] = [ratio_study(StudyConfig(**cfg, audit=True)) for cfg in configs]
    return _STUDIES[name]


def validity_studies():
    cfgs = []
    seed = 1000
    for mode, n, L in itertools.product(MODES, range(4, 13), range(2, 6)):
        kind = "random_levels" if (n + L) % 2 else "perturbed_ultrametric"
        cfgs.append(dict(mode=mode, kind=kind, n=n, L=L, k=max(1, n // 3), trials=5, runs_per_instance=20, seed=seed))
        seed += 1
    return _study("validity", cfgs)


def sandwich_studies():
    cfgs = []
    seed = 2000
    for mode, n, L in itertools.product(MODES, range(3, 7), (2, 3)):
        kind = "random_levels" if n % 2 else "perturbed_ultrametric"
        cfgs.append(
            dict(mode=mode, kind=kind, n=n, L=L, k=2, trials=21, runs_per_instance=5, seed=seed, oracle_budget=20_000_000)
        )
        seed += 1
    return _study("sandwich", cfgs)


def complete_studies():
    return _study(
        "complete",
        [
            dict(mode="complete", alpha=F(2, 5), n=10, L=3, k=k, trials=300, runs_per_instance=5, seed=3000 + k)
            for k in (1, 2, 3)
        ],
    )


def formula_studies():
    return _study(
        "formula",
        [
            dict(mode="complete", alpha=a, n=6, L=3, k=2, trials=300, runs_per_instance=5, seed=4000 + i,
                 oracle_budget=20_000_000)
            for i, a in enumerate((F(1, 2), GOLDEN_ALPHA))
        ],
    )


def kpartite_studies():
    return _study(
        "kpartite",
        [dict(mode="kpartite", n=12, L=3, k=3, parts=3, trials=300, runs_per_instance=5, seed=5000)],
    )


def weighted_studies():
    return _study(
        "weighted",
        [
            dict(mode="weighted", kind="perturbed_ultrametric", n=n, L=4, k=n, trials=200, runs_per_instance=3,
                 seed=6000 + n)
            for n in (6, 9, 12, 15)
        ],
    )


def partition_studies():
    """Heavily corrupted instances, whose LP optima are fractional enough to exercise the random buckets."""
    return _study(
        "partition",
        [
            dict(mode="complete", kind="random_levels", n=10, L=3, trials=40, runs_per_instance=25, seed=9001),
            dict(mode="kpartite", n=12, L=3, k=20, parts=3, trials=60, runs_per_instance=30, seed=9002),
        ],
    )


ALL_STUDIES = (validity_studies, sandwich_studies, complete_studies, formula_studies, kpartite_studies, weighted_studies)


def _no_failed(reports):
    failed = [t.failed for r in reports for t in r.failed_trials]
    assert not failed, f"LP failures: {failed[:3]}"


@pytest.mark.acceptance(1)
def test_criterion_01_outputs_are_ultrametrics(record_property):
    reports = validity_studies()
    _no_failed(reports)
    runs = sum(t.runs for r in reports for t in r.trials)
    invalid = sum(not t.valid for r in reports for t in r.trials)
    record_property("detail", f"{runs} runs over {len(reports)} (mode, n, L) cells, {invalid} invalid trials")
    assert runs >= 10_000
    assert invalid == 0


@pytest.mark.acceptance(2)
def test_criterion_02_sandwich_bound(record_property):
    reports = sandwich_studies()
    _no_failed(reports)
    trials = [t for r in reports for t in r.trials]
    assert all(t.n <= 6 and t.L <= 3 for t in trials)
    missing = sum(t.opt_cost is None for t in trials)
    bad = [t for t in trials if t.sandwich_ok is not True]
    record_property("detail", f"{len(trials)} instances, {missing} without OPT, {len(bad)} sandwich violations")
    assert len(trials) >= 500
    assert missing == 0
    for t in trials:
        # alg_min is the cheapest of the trial's runs, so this covers every run.
        assert t.lp_bound <= t.opt_cost + 1e-6 and t.opt_cost <= t.alg_min + 1e-9, t


@pytest.mark.acceptance(3)
def test_criterion_03_complete_mode_ratio(record_property):
    reports = complete_studies()
    _no_failed(reports)
    parts = []
    for rep in reports:
        k = rep.config.k
        cost, cost_se = rep.cost_stats()
        ratio, ratio_se = rep.ratio_lp_stats()
        parts.append(f"k={k}: ALG/k={cost / k:.3f}, ALG/LP={ratio:.3f}")
        assert len(rep.trials) >= 300
        assert cost / k <= 5 + 3 * cost_se / k, (k, cost, cost_se)
        assert ratio <= 5 + 3 * ratio_se, (k, ratio, ratio_se)
    record_property("detail", "; ".join(parts))


@pytest.mark.acceptance(4)
def test_criterion_04_ratio_formula(record_property):
    reports = formula_studies()
    _no_failed(reports)
    parts = []
    for rep in reports:
        a = rep.alpha
        bound = 6.0 if a == 0.5 else max(3 / (1 - a), 2 / a)
        ratio, se = rep.ratio_opt_stats()
        n_ratio = sum(t.ratio_opt is not None for t in rep.ok_trials)
        parts.append(f"alpha={a:.4f}: ALG/OPT={ratio:.3f} (bound {bound:.3f}, {n_ratio} trials)")
        assert n_ratio >= 100
        assert ratio <= bound + 3 * se, (a, ratio, se)
    record_property("detail", "; ".join(parts))


@pytest.mark.acceptance(5)
def test_criterion_05_kpartite_ratio(record_property):
    (rep,) = kpartite_studies()
    _no_failed([rep])
    ratio, se = rep.ratio_lp_stats()
    record_property("detail", f"ALG/LP={ratio:.3f} +- {se:.3f} over {len(rep.trials)} trials (bound 16)")
    assert len(rep.trials) >= 300
    assert ratio <= 16 + 3 * se


@pytest.mark.acceptance(6)
def test_criterion_06_weighted_log_trend(record_property):
    reports = weighted_studies()
    _no_failed(reports)
    ratios = {}
    for rep in reports:
        assert len(rep.trials) >= 200
        ratios[rep.config.n], _ = rep.ratio_lp_stats()
    growth = ratios[15] / ratios[6]
    limit = 2 * math.log(15) / math.log(6)
    record_property(
        "detail", ", ".join(f"n={n}: {r:.3f}" for n, r in ratios.items()) + f"; growth {growth:.3f} <= {limit:.3f}"
    )
    assert all(math.isfinite(r) for r in ratios.values())
    assert growth <= limit


@pytest.mark.acceptance(7)
def test_criterion_07_invariants_on_all_traces(record_property):
    tally = InvariantTally()
    mismatches = 0
    for study in ALL_STUDIES + (partition_studies,):
        for rep in study():
            tally.merge(rep.invariants)
            mismatches += rep.triangle_count_mismatches
    checks = sum(tally.checks.values())
    record_property("detail", f"{checks} checks, {tally.total_violations} violations")
    assert set(tally.checks) >= {
        "truncated_feasible", "dominant_mass_monotone", "cheap_or_hd_deterministic",
        "low_cost_unmodified", "dominant_in_u_or_root",
    }
    assert tally.total_violations == 0, dict(tally.violations)
    assert mismatches == 0


@pytest.mark.acceptance(8)
def test_criterion_08_sampler_distribution(record_property):
    # One pair (n = 2) with y = (0.5, 0.8, 1.0), i.e. level masses (0.5, 0.3, 0.2).
    y = LevelSolution.from_values(2, [[F(1, 2)], [F(4, 5)], [F(1)]])
    trunc = truncate(y, 1)
    draws = 100_000
    cases = [
        # Unspecified pair: masses used as they are.
        ("unspecified", False, F(1, 2), F(1, 2), [0.5, 0.3, 0.2]),
        # Specified pair at alpha * beta = 1/4: (y - 1/4)^+ / (3/4).
        ("specified", True, F(1, 2), F(1, 2), [1 / 3, 0.4, 4 / 15]),
    ]
    parts = []
    for name, in_E, alpha, beta, expected in cases:
        cls = classify_pivot_edge(trunc, 0, in_E, alpha, beta)
        assert not cls.deterministic
        rng = np.random.Generator(np.random.PCG64(8))
        levels = [sample_pivot_distance(trunc, 0, cls, alpha, beta, rng) for _ in range(draws)]
        observed = np.bincount(levels, minlength=4)[1:]
        p = chisquare(observed, f_exp=np.asarray(expected) * draws).pvalue
        parts.append(f"{name}: p={p:.3f}")
        assert p > 0.001, (name, observed, p)
    record_property("detail", "; ".join(parts))


@pytest.mark.acceptance(9)
def test_criterion_09_partition_probabilities(record_property):
    groups = {
        "complete": (validity_studies, sandwich_studies, complete_studies, formula_studies, partition_studies),
        "kpartite": (validity_studies, sandwich_studies, kpartite_studies, partition_studies),
    }
    required = {"complete": {Bucket.DET_DIFF, Bucket.RANDOM_E}, "kpartite": set(Bucket)}
    parts = []
    for mode, studies in groups.items():
        # Pool by (alpha, beta) so each bucket is compared with its own bound.
        pooled: dict[tuple[float, float], PartitionTally] = {}
        for study in studies:
            for rep in study():
                if rep.config.mode == mode:
                    pooled.setdefault((rep.alpha, rep.beta), PartitionTally()).merge(rep.partition)
        conclusive = set()
        for (a, b), tally in pooled.items():
            for res in partition_probability_audit(tally, a, b, min_events=10_000, z=3):
                assert res.status != "fail", res
                if res.status == "pass":
                    conclusive.add(res.bucket)
                    parts.append(f"{mode} {res.bucket.value} {res.frequency:.3f}>={res.bound:.3f} (n={res.events})")
        assert conclusive >= required[mode], (mode, conclusive)
    record_property("detail", "; ".join(parts))


def _deterministic_triangles(count, seed):
    """LP-feasible triangles with deterministic level-1 masses and mixed dominant levels."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        v = rng.uniform(0, 2 / 3, size=3)
        v = np.where(v < 1 / 3, v, v + 1 / 3)  # uniform on [0, 1/3) and (2/3, 1)
        a, b, c = (F(x).limit_denominator(10_000) for x in v)
        if not (a <= b + c and b <= a + c and c <= a + b):
            continue
        dom = [1 if t > F(2, 3) else 2 for t in (a, b, c)]
        if len(set(dom)) == 1:
            continue  # a one-level input has a single-level ladder
        out.append(((a, b, c), dom))
    return out


@pytest.mark.acceptance(10)
def test_criterion_10_rounding_scheme_examples(record_property):
    alpha = F(1, 3)
    frames = modified = 0
    for (a, b, c), dom in _deterministic_triangles(2000, seed=10):
        inst = instance_from_levels(np.array([[0, dom[0], dom[1]], [dom[0], 0, dom[2]], [dom[1], dom[2], 0]]))
        y = LevelSolution.from_values(3, [[a, b, c], [1, 1, 1]], weights=[1, 1, 1], input_level=dom)
        costs = edge_costs(inst, y, alpha)
        assert max(costs.c_star.values()) < alpha
        rounder = Rounder(inst, y, alpha)
        for s in range(5):
            res = rounder.run(s)
            root = res.trace.frames[0]
            frames += 1
            changed = any(e.level != e.old_level for e in root.pivot_edges) or any(
                r.level != r.old_level for r in root.repairs
            )
            modified += changed or res.cost != 0
    assert frames >= 10_000

    # Gadget: (0,1) small and (0,2) large are specified, (1,2) is unspecified.
    forced_ratios, default_ratios = {}, {}
    lv = np.array([[0, 2, 1], [2, 0, 0], [1, 0, 0]])
    spec = lv > 0
    inst = instance_from_levels(lv, mode="kpartite", specified=spec)
    for m in (5, 10, 20):
        eps = F(1, 1000 * m)
        y = LevelSolution.from_values(
            3, [[m * eps, 1 - eps, 1 - (m + 1) * eps], [1, 1, 1]], weights=[1, 1, 0], input_level=[2, 1, 0]
        )
        lp = edge_costs(inst, y, F(3, 8)).lp_lower_bound
        for force, store in ((False, default_ratios), (True, forced_ratios)):
            rounder = Rounder(inst, y, F(3, 8), F(2, 3), force_random=force)
            costs = [rounder.run(s, trace=False).cost for s in range(20_000)]
            store[m] = float(np.mean(costs)) / lp
    record_property(
        "detail",
        f"triangles: {modified}/{frames} frames modified; gadget ALG/LP forced vs default "
        + ", ".join(f"m={m}: {forced_ratios[m]:.3f} vs {default_ratios[m]:.3f}" for m in forced_ratios),
    )
    assert modified == 0
    for m in forced_ratios:
        assert forced_ratios[m] > default_ratios[m], m


@pytest.mark.acceptance(11)
def test_criterion_11_oracle_self_test(record_property):
    rng = np.random.default_rng(11)
    mismatched = []
    for i in range(100):
        mode = MODES[i % 3]
        n = int(rng.integers(3, 6))
        L = int(rng.integers(2, 4))
        kind = ("random_levels", "perturbed_ultrametric")[i % 2]
        inst = generate(kind, n, L, k=2, seed=int(rng.integers(2**31)), weighted=mode == "weighted")
        if mode == "kpartite":
            inst = generate("kpartite_perturbed", n, L, k=2, seed=int(rng.integers(2**31)), parts=min(3, n))
        pruned, full = exact_opt(inst), exact_opt_bruteforce(inst)
        if pruned.opt_cost != full.opt_cost:
            mismatched.append((i, pruned.opt_cost, full.opt_cost))
        assert is_ultrametric(pruned.witness) or inst.n < 3
    record_property("detail", f"100 instances, {len(mismatched)} mismatches")
    assert not mismatched, mismatched
