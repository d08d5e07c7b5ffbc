import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginnet.dataset import Vault
from marginnet.harness import (CLASS_LABELS, DESK_GRID, FULL_GRID, ExperimentConfig, HyperParams, RunResult,
                               assess, base_dataset, build_test_set, class_mse, distribution, load_config,
                               score_runs, train_run, tune, write_assessment_csv, write_tune_csv)
from marginnet.sampling import StabilityClass, classify_array, label

TINY = ExperimentConfig(seed=3, size=3, epochs=60, selection_seeds=2, assessment_seeds=2, test_grid_per_dim=3)


class OracleNet:
    """Stand-in whose predictions are the true damping ratios."""

    def __init__(self, offset=0.0):
        self.offset = offset

    def predict(self, X):
        return label(X).zeta + self.offset


def fake_run(net, diverged=False):
    return RunResult(0, net, 0.0, [], None, diverged=diverged)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg == ExperimentConfig()
        assert len(cfg.cells()) == 1 and cfg.grid == DESK_GRID

    def test_ini(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[experiment]\nscale = full\nvariant = ni\nseed = 4\n[train]\nepochs = 10\n"
                     "[grid]\nwidth = 16, 32\n[embed]\ndroop_anchor = 10 5\n")
        cfg = load_config(p, seed=9)
        assert cfg.seed == 9 and cfg.epochs == 10 and cfg.variant == "ni"
        assert cfg.grid["width"] == (16, 32) and cfg.grid["l0"] == FULL_GRID["l0"]
        assert cfg.test_grid_per_dim == 21 and cfg.droop_query[1] == (10.0, 5.0)

    @pytest.mark.parametrize("text", ["[experiment]\nscale = huge\n", "[experiment]\nvariant = xx\n",
                                      "[grid]\nwidth = 17\n", "[experiment]\nsampler = sobol\n"])
    def test_invalid(self, tmp_path, text):
        p = tmp_path / "c.ini"
        p.write_text(text)
        with pytest.raises(ValueError):
            load_config(p)

    def test_cells_by_variant(self):
        full = dict(FULL_GRID)
        n = 3 * 3 * 4 * 4
        assert len(ExperimentConfig(grid=full, variant="base").cells()) == n
        assert len(ExperimentConfig(grid=full, variant="pr").cells()) == n * 5
        assert len(ExperimentConfig(grid=full, variant="ni").cells()) == n * 2
        assert all(c.alpha_j == 0 for c in ExperimentConfig(grid=full, variant="vi").cells())

    def test_digest(self):
        a = ExperimentConfig()
        assert a.digest() == ExperimentConfig().digest()
        assert a.digest() != replace(a, seed=1).digest()


class TestHyperParams:
    def test_n_params(self):
        assert HyperParams(2, 16).n_params() == 4 * 16 + 16 + 16 * 16 + 16 + 16 + 1

    def test_tie_break(self):
        cells = [HyperParams(3, 16), HyperParams(2, 32), HyperParams(2, 16, l0=0.02), HyperParams(2, 16)]
        order = sorted(cells, key=HyperParams.tie_key)
        assert order[0] == HyperParams(2, 16) and order[1] == HyperParams(2, 16, l0=0.02)
        assert order[-1] == HyperParams(2, 32)  # 1249 parameters against 593 for 3x16


class TestScoring:
    def test_perfect_oracle(self):
        vault = build_test_set(3)
        rep = score_runs([fake_run(OracleNet())], vault, 2.0)
        assert rep.runs[0]["total"] == 0.0 and vault.open_count == 1
        assert sum(rep.counts.values()) == 81

    def test_offset_units(self):
        rep = score_runs([fake_run(OracleNet(1.0))], build_test_set(3), 2.0)
        assert rep.runs[0]["total"] == pytest.approx(0.25)

    def test_diverged(self):
        class NanNet:
            def predict(self, X):
                return np.full(len(X), np.nan)

        rep = score_runs([fake_run(NanNet()), fake_run(OracleNet(), diverged=True), fake_run(OracleNet())],
                         build_test_set(3), 1.0)
        assert [r["diverged"] for r in rep.runs] == [True, True, False]
        s = rep.summary()
        assert s["failures"] == 2 and s["mse"]["total"]["n"] == 1

    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=60), st.floats(0.1, 10))
    @settings(max_examples=50, deadline=None)
    def test_class_recombination(self, zeta, sigma):
        zeta = np.array(zeta)
        pred = zeta + np.sin(np.arange(zeta.size))
        cls = classify_array(zeta)
        m = class_mse(pred, zeta, cls, sigma)
        present = [c for c in StabilityClass if np.any(cls == c)]
        recombined = sum(np.sum(cls == c) * m[c.label] for c in present)
        assert recombined / zeta.size == pytest.approx(m["total"], rel=1e-9, abs=1e-15)
        assert sum(not math.isnan(m[k]) for k in CLASS_LABELS) == len(present)

    def test_csv(self, tmp_path):
        rep = score_runs([fake_run(OracleNet(0.5))], build_test_set(2), 1.0)
        write_assessment_csv(tmp_path / "a.csv", rep)
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0].startswith("seed,diverged,val_objective,total") and len(lines) == 2


class TestDistribution:
    def test_known(self):
        d = distribution([1, 2, 3, 4, 100, math.inf, math.nan])
        assert d["n"] == 5 and d["median"] == 3 and d["outliers"] == [100.0]
        assert d["whisker_low"] == 1 and d["whisker_high"] == 4

    def test_empty(self):
        assert distribution([math.nan]) == {"n": 0}


class TestRuns:
    def test_base_dataset(self):
        ds, info = base_dataset(TINY)
        assert len(ds) == 81 and info is None
        assert ds.meta["base_sigma_y"] == ds.standardizer.sigma_y

    def test_dw_dataset(self):
        ds, info = base_dataset(replace(TINY, variant="dw"))
        assert len(ds) == 81 + info["n_added"]
        assert info["n_walks"] == sum(info["statuses"].values())

    def test_train_deterministic(self):
        ds, _ = base_dataset(TINY)
        a = train_run(TINY, ds, HyperParams(2, 16), 5)
        b = train_run(TINY, ds, HyperParams(2, 16), 5)
        assert np.array_equal(a.net.theta, b.net.theta) and a.val_objective == b.val_objective
        assert a.net.meta["seed"] == 5 and a.net.meta["width"] == 16

    def test_ni_interrupt(self):
        cfg = replace(TINY, variant="ni", enrich=replace(TINY.enrich, pool_size=5000, n_samples=20,
                                                         interrupt_epoch=20))
        ds, _ = base_dataset(cfg)
        r = train_run(cfg, ds, HyperParams(2, 16), 1)
        assert len(r.reports) == 2 and r.reports[1].start_epoch == 20
        assert len(r.dataset) == len(ds) + r.enrichment["n_samples"]
        assert r.net.standardizer == r.dataset.standardizer

    def test_divergence_flagged(self, monkeypatch):
        from marginnet import harness
        from marginnet.errors import TrainingError

        def boom(*a, **k):
            raise TrainingError("non-finite loss", 0)

        monkeypatch.setattr(harness, "train", boom)
        ds, _ = base_dataset(TINY)
        r = train_run(TINY, ds, HyperParams(2, 16), 0)
        assert r.diverged and r.val_objective == math.inf

    def test_tune_and_assess(self, tmp_path):
        cfg = replace(TINY, grid={**DESK_GRID, "width": (16, 32)})
        vault = build_test_set(cfg.test_grid_per_dim)
        ds, _ = base_dataset(cfg, vault)
        res = tune(cfg, ds)
        assert len(res.table) == 2
        assert res.selected == min(res.table, key=lambda r: (r[1], r[0].tie_key()))[0]
        write_tune_csv(tmp_path / "t.csv", res)
        assert (tmp_path / "t.csv").read_text().count("\n") == 3
        rep, nets = assess(cfg, ds, res.selected, vault)
        assert len(rep.runs) == 2 and vault.open_count == 1
        assert rep.sigma_y == ds.meta["base_sigma_y"]
        rep2, _ = assess(cfg, ds, res.selected, Vault(vault.open_for_assessment()), workers=2)
        assert [r["total"] for r in rep2.runs] == [r["total"] for r in rep.runs]
