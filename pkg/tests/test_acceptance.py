"""End-to-end acceptance checks on the bundled datasets.

Each test prints one ``PASS``/``FAIL`` line (repeated in the session summary)
and asserts the criterion at its stated tolerance. Run only these with
``pytest -m acceptance -s``.
"""

import math
import sys

import numpy as np
import pytest

import conftest
from conftest import WORKED_PATH, WORKED_SAMPLE, dataset_path, worked_network, random_network, requires_data
from oracles import count_metrics
from test_clustering import paths_with_counts
from test_metrics import random_prediction_set
from test_nn import gradient_check
from test_slicing import oracle_mismatches
from fairrepair.clustering import ClusterParams, build_path_table, get_samples_divided
from fairrepair.experiment import ExperimentConfig, run_comparison
from fairrepair.metrics import PredictionSet, report_from_predictions
from fairrepair.slicing import BACKENDS, ActivationProfile, SliceParams, get_activation_path
from fairrepair.tuning import GridSpec

pytestmark = pytest.mark.acceptance

TRIALS = 10
NAIVE_TARGETS = {"census": (0.839, 0.03), "credit": (0.734, 0.03), "compas": (0.621, 0.05)}


def verdict(number, name, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name} -- {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _config(dataset, **kw):
    return ExperimentConfig(dataset=dataset, data_path=str(dataset_path({"census": "adult", "credit": "german"}
                                                                            .get(dataset, dataset))),
                            trials=TRIALS, **kw)


@pytest.fixture(scope="module")
def compas_runs():
    # theta/gamma are grid-searched inside every trial on the validation split.
    cfg = _config("compas", grid=GridSpec())
    return run_comparison(cfg, ["naive", "fairneuron", "random_control", "pure_dropout", "pure_ordinary"])


@pytest.fixture(scope="module")
def census_runs():
    # Default theta/gamma: a full per-trial grid search on Census is too slow for a test run.
    return run_comparison(_config("census"), ["naive", "fairneuron"])


@pytest.fixture(scope="module")
def credit_runs():
    return run_comparison(_config("credit"), ["naive", "fairneuron"])


@pytest.fixture
def runs(request):
    return request.getfixturevalue(f"{request.param}_runs")


def _means(rec):
    assert not rec.failed, [t.error for t in rec.failed]
    return rec.mean("acc"), rec.mean("dp")


@requires_data
class TestNaiveUtility:
    @pytest.mark.parametrize("runs", ["census", "credit", "compas"], indirect=True)
    def test_naive_accuracy(self, runs):
        rec = runs["naive"]
        target, tol = NAIVE_TARGETS[rec.dataset]
        acc, _ = _means(rec)
        verdict(1, f"naive utility ({rec.dataset})", abs(acc - target) <= tol,
                f"mean acc {acc:.4f} over {len(rec.trials)} trials, target {target} ± {tol}")


@requires_data
class TestRepairEffectiveness:
    def test_compas(self, compas_runs):
        acc_n, dp_n = _means(compas_runs["naive"])
        acc_f, dp_f = _means(compas_runs["fairneuron"])
        ok = dp_f <= 0.5 * dp_n and acc_f >= acc_n - 0.02
        verdict(2, "repair effectiveness (compas)", ok,
                f"DP {dp_n:.4f} -> {dp_f:.4f} ({100 * (1 - dp_f / dp_n):.1f}% reduction, need >= 50%); "
                f"acc {acc_n:.4f} -> {acc_f:.4f} (need >= {acc_n - 0.02:.4f})")

    def test_census(self, census_runs):
        acc_n, dp_n = _means(census_runs["naive"])
        acc_f, dp_f = _means(census_runs["fairneuron"])
        ok = dp_f <= 0.6 * dp_n and acc_n - acc_f <= 0.03
        verdict(3, "repair effectiveness (census)", ok,
                f"DP {dp_n:.4f} -> {dp_f:.4f} ({100 * (1 - dp_f / dp_n):.1f}% reduction, need >= 40%); "
                f"acc {acc_n:.4f} -> {acc_f:.4f} (drop must be <= 0.03)")


@requires_data
class TestAblations:
    def test_selective_dropout_ordinary_ordering(self, compas_runs):
        sel = _means(compas_runs["fairneuron"])[1]
        drop = _means(compas_runs["pure_dropout"])[1]
        ordi = _means(compas_runs["pure_ordinary"])[1]
        verdict(4, "ablation ordering (compas)", sel < drop < ordi,
                f"DP selective {sel:.4f}, pure dropout {drop:.4f}, pure ordinary {ordi:.4f} "
                "(need selective < dropout < ordinary)")

    def test_path_clustering_beats_random(self, compas_runs):
        ours = _means(compas_runs["fairneuron"])[1]
        rand = _means(compas_runs["random_control"])[1]
        verdict(5, "clustering ablation (compas)", ours < rand,
                f"DP path-based {ours:.4f} vs size-matched random {rand:.4f}")


class TestGolden:
    def test_worked_examples(self):
        failures = []
        net = worked_network()
        for backend in sorted(BACKENDS):
            path = get_activation_path(net, WORKED_SAMPLE, SliceParams(0.8), ActivationProfile.zeros(net),
                                       backend=backend)
            if path.edge_set != WORKED_PATH:
                failures.append(f"path ({backend})")
        split = get_samples_divided(build_path_table(paths_with_counts([25, 10, 3, 2])), ClusterParams(0.3))
        if split.biased != list(range(35, 40)):
            failures.append("theta=0.3 clustering")
        counts = [47, 20, 5, 2, 2, 1, 1, 1]
        table = build_path_table(paths_with_counts(counts))
        split = get_samples_divided(table, ClusterParams(0.03))
        singles = sorted(e.members[0] for e in table.entries.values() if e.frequency == 1)
        if split.max_frequency != 47 or split.biased != singles:
            failures.append("theta=0.03/M=47 clustering")
        verdict(6, "worked-example golden tests", not failures,
                "edge set and both biased sets exact" if not failures else f"mismatch in {failures}")


class TestOracleEquivalence:
    def test_random_networks(self):
        n_nets = 1000
        bad = {b: oracle_mismatches(n_nets, 2024, b) for b in sorted(BACKENDS)}
        verdict(7, "slicing oracle equivalence", all(v == 0 for v in bad.values()),
                f"{n_nets} nets x gamma {{0.5, 0.8, 1.0}}, mismatches per backend {bad}")


class TestGradients:
    def test_random_gradient_checks(self):
        rng = np.random.default_rng(8)
        worst = 0.0
        for k in range(100):
            sizes = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(2, 5)))]
            head = "linear" if k % 2 else "softmax"
            sizes[-1] = 1 if head == "linear" else 2
            net = random_network(rng, sizes, head)
            n = int(rng.integers(1, 9))
            X = rng.normal(size=(n, sizes[0]))
            t = rng.normal(size=(n, 1)) if head == "linear" else rng.integers(0, 2, n)
            w = rng.random(n) + 0.5 if k % 3 == 0 else None
            worst = max(worst, gradient_check(net, X, t, w))
        verdict(8, "gradient checks", worst < 1e-4, f"max relative error {worst:.2e} over 100 nets (need < 1e-4)")


def _ratios_reciprocal(a, b):
    if a == 0 or math.isinf(a):
        return b == (math.inf if a == 0 else 0)
    return math.isclose(a * b, 1.0, rel_tol=1e-12)


class TestMetrics:
    def test_oracle_and_invariants(self):
        rng = np.random.default_rng(31)
        bad = 0
        for _ in range(1000):
            y_hat, y, s = random_prediction_set(rng, int(rng.integers(4, 80)))
            want = count_metrics(y_hat.tolist(), y.tolist(), s.tolist())
            rep = report_from_predictions(PredictionSet(y_hat, y, s))
            perm = rng.permutation(len(y))
            shuffled = report_from_predictions(PredictionSet(y_hat[perm], y[perm], s[perm]))
            swapped = report_from_predictions(PredictionSet(y_hat, y, 1 - s))
            checks = [
                math.isclose(rep.dp, want["dp"], abs_tol=1e-12),
                math.isclose(rep.eo, want["eo"], abs_tol=1e-12),
                rep.dpr_is_inf if math.isinf(want["dpr"]) else math.isclose(rep.dpr, want["dpr"], rel_tol=1e-12),
                shuffled.to_dict() == rep.to_dict(),
                math.isclose(rep.dp, swapped.dp, abs_tol=1e-15),
                math.isclose(rep.eo, swapped.eo, abs_tol=1e-15),
                _ratios_reciprocal(rep.dpr, swapped.dpr),
            ]
            ok = all(checks)
            bad += not ok
        verdict(9, "metric correctness", bad == 0, f"{bad} disagreements over 1000 random prediction sets")


@requires_data
class TestOverhead:
    @pytest.mark.parametrize("runs", ["census", "credit", "compas"], indirect=True)
    def test_pipeline_overhead(self, runs):
        rec = runs["fairneuron"]
        assert not rec.failed
        stages = ("slicing", "clustering", "training")
        naive = np.mean([t.timings["naive_training"] for t in rec.trials])
        means = {k: float(np.mean([t.timings[k] for t in rec.trials])) for k in stages}
        pipeline = float(np.mean([t.timings["method_total"] - t.timings.get("tuning", 0.0) for t in rec.trials]))
        ratio = pipeline / naive
        breakdown = ", ".join(f"{k} {v:.2f}s" for k, v in means.items())
        verdict(10, f"overhead bound ({rec.dataset})", ratio <= 10.0,
                f"pipeline {pipeline:.2f}s / naive {naive:.2f}s = {ratio:.2f}x (need <= 10x); {breakdown}")
