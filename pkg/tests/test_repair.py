import json

import numpy as np
import pytest

from conftest import toy_dataset
from fairrepair.errors import ConfigError, SliceParamError, StageError
from fairrepair.nn import Adam, TrainConfig, build_network, data_targets, fit_pass, train
from fairrepair.repair import (
    RepairConfig, divide_samples, fairneuron_repair, random_split_like, selective_train, uniform_retrain,
)


@pytest.fixture
def trained(rng):
    data = toy_dataset(rng, n=300)
    net = build_network([data.n_features, 8, 8, 8, 2], seed=3)
    net, _ = train(net, data, TrainConfig(max_epochs=5))
    return net, data


def reference_retrain(net, passes, cfg):
    """Continued training written out pass by pass, without selective_train."""
    net = net.copy()
    net.config.dropout_rate = cfg.dropout_rate
    net.rng = np.random.default_rng([cfg.train.seed, 1])
    opt = Adam(net, cfg.train)
    shuffle = np.random.default_rng(cfg.train.seed)
    for epoch in range(cfg.retrain_epochs):
        for data, dropout in passes:
            fit_pass(net, opt, data.X, data_targets(net, data), None, cfg.train.batch_size, shuffle, dropout, epoch)
    return net


class TestConfig:
    def test_validation(self):
        with pytest.raises(SliceParamError):
            RepairConfig(theta=0)
        with pytest.raises(SliceParamError):
            RepairConfig(gamma=1.2)
        with pytest.raises(ConfigError):
            RepairConfig(retrain_epochs=0)
        with pytest.raises(ConfigError):
            RepairConfig(interleave="random")


class TestSelectiveTrain:
    def test_empty_biased_equals_continued_training(self, trained, caplog):
        net, data = trained
        cfg = RepairConfig(retrain_epochs=3)
        empty = data.subset([])
        got = selective_train(net, data, empty, cfg)
        want = reference_retrain(net, [(data, False)], cfg)
        assert got.same_parameters(want)
        assert "biased set is empty" in caplog.text

    def test_zero_rate_equals_ordinary_training_in_order(self, trained):
        net, data = trained
        cfg = RepairConfig(retrain_epochs=2, dropout_rate=0.0)
        a, b = data.subset(range(0, 200)), data.subset(range(200, 300))
        got = selective_train(net, a, b, cfg)
        want = reference_retrain(net, [(a, False), (b, False)], cfg)
        assert got.same_parameters(want)

    def test_biased_pass_uses_dropout(self, trained):
        net, data = trained
        cfg = RepairConfig(retrain_epochs=2, dropout_rate=0.5)
        a, b = data.subset(range(0, 200)), data.subset(range(200, 300))
        got = selective_train(net, a, b, cfg)
        assert got.same_parameters(reference_retrain(net, [(a, False), (b, True)], cfg))
        assert not got.same_parameters(reference_retrain(net, [(a, False), (b, False)], cfg))

    def test_block_sequential(self, trained):
        net, data = trained
        cfg = RepairConfig(retrain_epochs=2, interleave="block_sequential")
        a, b = data.subset(range(0, 200)), data.subset(range(200, 300))
        got = selective_train(net, a, b, cfg)
        # all ordinary epochs, then all biased epochs
        ref = net.copy()
        ref.config.dropout_rate = cfg.dropout_rate
        ref.rng = np.random.default_rng([cfg.train.seed, 1])
        opt = Adam(ref, cfg.train)
        shuffle = np.random.default_rng(cfg.train.seed)
        for part, dropout in ((a, False), (b, True)):
            for epoch in range(2):
                fit_pass(ref, opt, part.X, data_targets(ref, part), None, 128, shuffle, dropout, epoch)
        assert got.same_parameters(ref)

    def test_needs_samples(self, trained):
        net, data = trained
        with pytest.raises(ValueError):
            selective_train(net, data.subset([]), data.subset([]), RepairConfig())

    def test_small_biased_set_runs_one_batch(self, trained):
        net, data = trained
        out = selective_train(net, data.subset(range(100)), data.subset([0, 1, 2]), RepairConfig(retrain_epochs=1))
        assert out.all_finite()

    def test_input_network_untouched(self, trained):
        net, data = trained
        before = net.copy()
        uniform_retrain(net, data, RepairConfig(retrain_epochs=1), dropout=True)
        assert net.same_parameters(before) and net.config == before.config


class TestPipeline:
    def test_stage_purity(self, trained):
        net, data = trained
        before = json.dumps([w.tolist() for w in net.weights] + [b.tolist() for b in net.biases])
        divide_samples(net, data, RepairConfig(theta=0.3))
        after = json.dumps([w.tolist() for w in net.weights] + [b.tolist() for b in net.biases])
        assert before == after

    def test_deterministic(self, trained):
        net, data = trained
        cfg = RepairConfig(theta=0.3, retrain_epochs=2)
        a = fairneuron_repair(net, data, cfg, data)
        b = fairneuron_repair(net, data, cfg, data)
        assert a.network.same_parameters(b.network)
        assert a.split.biased == b.split.biased
        assert a.after == b.after

    def test_timings(self, trained):
        net, data = trained
        out = fairneuron_repair(net, data, RepairConfig(theta=0.3, retrain_epochs=2), data)
        assert set(out.timings) == {"slicing", "clustering", "training", "evaluation"}
        assert all(t >= 0 for t in out.timings.values())
        assert sum(out.timings.values()) <= out.total_time * 1.05

    def test_report_json(self, trained):
        net, data = trained
        out = fairneuron_repair(net, data, RepairConfig(theta=0.3, retrain_epochs=1), data)
        doc = json.loads(json.dumps(out.to_dict()))
        assert set(doc["split"]) == {"n_ordinary", "n_biased", "n_biased_paths", "theta", "M"}
        assert doc["split"]["n_ordinary"] + doc["split"]["n_biased"] == data.n_rows
        assert {"slicing", "clustering", "training"} <= set(doc["timings"])

    def test_single_dominant_path_changes_little(self, rng):
        """An already-fair model whose samples share one path: nothing to fix."""
        data = toy_dataset(rng, n=200, bias_strength=0.0)
        net = build_network([data.n_features, 1, 1, 1, 2], seed=0)
        for w in net.weights:
            w[...] = np.abs(w)
        out = fairneuron_repair(net, data, RepairConfig(theta=0.03, retrain_epochs=1), data)
        assert len(out.split.biased) <= 0.05 * data.n_rows

    def test_slicing_errors_are_labelled(self, trained):
        net, data = trained
        bad = data.subset(range(10))
        bad.X = bad.X[:, :2]
        with pytest.raises(StageError) as info:
            fairneuron_repair(net, bad, RepairConfig())
        assert info.value.stage == "slicing"

    def test_random_split_like(self, trained):
        net, data = trained
        split = divide_samples(net, data, RepairConfig(theta=0.5))
        r = random_split_like(split, data.n_rows, 0)
        assert len(r.biased) == len(split.biased)
        assert sorted(r.biased + r.ordinary) == list(range(data.n_rows))
