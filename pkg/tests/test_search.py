import numpy as np
import pytest

from pas.diffcore import Rng
from pas.graphdata import gen_synthetic, stratified_split
from pas.search import (
    SearchConfig,
    SearchDiverged,
    TrainReport,
    cross_validate,
    pas_search,
    random_search,
    sample_architecture,
    train_architecture,
)
from pas.supernet import DerivedArch, search_space_size

FULL_PIN = {"agg1": "GIN", "agg2": "GCN", "pool1": "SAGPOOL", "pool2": "NONE",
            "read0": "ZERO", "read1": "GLOBAL_MEAN", "read2": "GLOBAL_SUM", "merge": "M_SUM"}


@pytest.fixture(scope="module")
def small():
    return gen_synthetic("feature-sum", 40, seed=2)


def quick(**kw):
    base = dict(hidden=8, epochs=2, batch_size=16, seed=0)
    base.update(kw)
    return SearchConfig(**base)


def split(ds, cfg):
    tr, va, te = stratified_split(ds.labels, cfg.split, cfg.seed)
    return ds.subset(tr), ds.subset(va), ds.subset(te)


class TestSearchConfig:
    @pytest.mark.parametrize("kw", [dict(split=(0.5, 0.2, 0.2)), dict(lr_w=0.0), dict(lr_alpha=-1.0),
                                    dict(tau=0.0), dict(layers=0), dict(ratio=0.0),
                                    dict(pins={"agg": "NOPE"}), dict(activation="swish")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SearchConfig(**kw)

    def test_defaults(self):
        cfg = SearchConfig()
        assert (cfg.tau, cfg.epochs, cfg.batch_size, cfg.lr_w, cfg.lr_alpha) == (0.2, 200, 64, 0.005, 0.003)
        assert cfg.split == (0.8, 0.1, 0.1)


class TestPasSearch:
    def test_all_sites_pinned(self, small):
        derived, report, arch = pas_search(small, quick(pins=FULL_PIN))
        assert derived == DerivedArch.from_choices(arch.pins, 2)
        assert derived.pools[0].name == "SAGPOOL"
        assert report.epochs == 2 and np.isfinite(report.train_loss).all()

    def test_deterministic(self, small):
        a, ra, _ = pas_search(small, quick(seed=5))
        b, rb, _ = pas_search(small, quick(seed=5))
        assert a == b
        assert ra.train_loss == rb.train_loss and ra.val_acc == rb.val_acc

    def test_report_and_split(self, small):
        _, report, arch = pas_search(small, quick(pins={"pool": "NONE"}))
        assert len(report.train_loss) == len(report.val_loss) == len(report.val_acc) == 2
        assert report.final["split_sizes"] == [32, 4, 4]
        assert report.final["probabilities"]["pool1"][-1] == 1.0
        assert set(report.final["probabilities"]) == set(arch.sites())

    def test_alpha_moves_and_pins_do_not(self, small):
        _, _, arch = pas_search(small, quick(pins={"merge": "M_SUM"}, lr_alpha=0.05))
        assert "merge" not in arch.alpha
        assert any(np.abs(a.data).max() > 0.01 for a in arch.alpha.values())

    def test_divergence_aborts_with_report(self, small):
        bad = gen_synthetic("feature-sum", 40, seed=2)
        for g in bad.graphs:
            g.feat[:] = 1e308
        with pytest.raises((SearchDiverged, FloatingPointError)), np.errstate(all="ignore"):
            pas_search(bad, quick())

    def test_alpha_step_reduces_validation_loss(self, small):
        # one first-order alpha step at a tiny rate must not increase the noise-free val loss
        from pas.diffcore import Adam, ParamStore, cross_entropy, no_grad
        from pas.graphdata import make_batch
        from pas.supernet import ArchParams, supernet_forward
        cfg = quick()
        _, val, _ = split(small, cfg)
        mcfg = cfg.model_config(small.num_features, small.num_classes)
        params, arch = ParamStore(0), ArchParams(2, init_scale=0.5, seed=1)
        batch = make_batch(list(val))

        def val_loss():
            with no_grad():
                return cross_entropy(supernet_forward(batch, arch, params, mcfg), batch.labels).item()
        before = val_loss()
        loss = cross_entropy(supernet_forward(batch, arch, params, mcfg), batch.labels)
        loss.backward()
        Adam(arch.alpha, lr=1e-5).step()
        assert val_loss() < before


PLAIN_GCN = DerivedArch(("GCN", "GCN"), ("NONE", "NONE"), ("GLOBAL_SUM",) * 3, "M_SUM")


@pytest.fixture(scope="module")
def five_epochs():
    ds = gen_synthetic("feature-sum", 200, seed=0)
    cfg = SearchConfig(epochs=5, seed=0)
    tr, va, _ = split(ds, cfg)
    return train_architecture(tr, va, PLAIN_GCN, cfg, ds.num_features, ds.num_classes)[1]


class TestTrainArchitecture:
    ARCH = PLAIN_GCN

    def test_loss_decreases_over_first_epochs(self, five_epochs):
        assert five_epochs.train_loss[-1] < five_epochs.train_loss[0]

    @pytest.mark.xfail(reason="minibatch Adam at lr 0.005 oscillates on sum readouts", strict=False)
    def test_loss_non_increasing_early(self, five_epochs):
        assert all(b <= a for a, b in zip(five_epochs.train_loss, five_epochs.train_loss[1:]))

    def test_identical_seeds(self, small):
        cfg = quick(epochs=3)
        tr, va, te = split(small, cfg)
        p1, r1 = train_architecture(tr, va, self.ARCH, cfg, 4, 2, test=te)
        p2, r2 = train_architecture(tr, va, self.ARCH, cfg, 4, 2, test=te)
        assert r1.train_loss == r2.train_loss and r1.final == r2.final
        for k in p1:
            np.testing.assert_array_equal(p1[k].data, p2[k].data)

    def test_zero_epochs(self, small):
        cfg = quick(epochs=0)
        tr, va, _ = split(small, cfg)
        params, report = train_architecture(tr, va, self.ARCH, cfg, 4, 2)
        assert report.train_loss == [] and report.epochs == 0
        assert len(params) > 0

    def test_selects_best_validation_epoch(self, small):
        cfg = quick(epochs=6)
        tr, va, _ = split(small, cfg)
        _, report = train_architecture(tr, va, self.ARCH, cfg, 4, 2)
        e = report.final["best_epoch"]
        assert report.val_acc[e - 1] == max(report.val_acc)
        assert report.final["val_acc"] == report.val_acc[e - 1]

    def test_report_csv(self, small, tmp_path):
        r = TrainReport()
        r.record(1.0, 2.0, 0.5)
        r.to_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines() == [
            "epoch,train_loss,val_loss,val_acc", "1,1.0,2.0,0.5"]


class TestCrossValidate:
    ARCH = DerivedArch(("GCN",), ("TOPKPOOL",), ("GLOBAL_SUM",) * 2, "M_SUM")

    def test_folds_and_determinism(self, small):
        cfg = quick(layers=1, epochs=1)
        a = cross_validate(small, self.ARCH, 4, cfg)
        b = cross_validate(small, self.ARCH, 4, cfg)
        assert [f["fold"] for f in a.folds] == [0, 1, 2, 3]
        assert a.folds == b.folds and a.mean == b.mean
        accs = np.array([f["test_acc"] for f in a.folds])
        assert a.mean == pytest.approx(accs.mean()) and a.std == pytest.approx(accs.std(ddof=0))

    def test_threads_match_serial(self, small):
        a = cross_validate(small, self.ARCH, 2, quick(layers=1, epochs=1))
        b = cross_validate(small, self.ARCH, 2, quick(layers=1, epochs=1, workers=2))
        assert a.folds == b.folds

    def test_csv_has_mean_row(self, small, tmp_path):
        res = cross_validate(small, self.ARCH, 2, quick(layers=1, epochs=1))
        res.to_csv(tmp_path / "cv.csv")
        lines = (tmp_path / "cv.csv").read_text().splitlines()
        assert lines[0] == "fold,train_acc,val_acc,test_acc" and lines[-1].startswith("mean,")
        assert len(lines) == 4

    def test_k_too_large(self, small):
        with pytest.raises(ValueError):
            cross_validate(small, self.ARCH, 50, quick(layers=1))


class TestRandomSearch:
    def test_single_trial(self, small):
        best, trials, wall = random_search(small, quick(epochs=1), 1)
        assert len(trials) == 1 and trials[0]["arch"] == best and wall > 0

    def test_pins_respected(self, small):
        _, trials, _ = random_search(small, quick(epochs=1, pins={"pool": "NONE", "merge": "M_MAX"}), 3)
        for t in trials:
            assert all(p.name == "NONE" for p in t["arch"].pools)
            assert t["arch"].merge.name == "M_MAX"

    def test_same_seed_same_samples(self):
        a = [sample_architecture(Rng(3), 2) for _ in range(1)]
        b = [sample_architecture(Rng(3), 2) for _ in range(1)]
        assert a == b
        rng = Rng(0)
        seen = {sample_architecture(rng, 2) for _ in range(200)}
        assert len(seen) == 200 and search_space_size(2) > 200

    def test_best_by_validation(self, small):
        best, trials, _ = random_search(small, quick(epochs=1), 3)
        assert best == max(trials, key=lambda t: t["val_acc"])["arch"]

    def test_needs_a_trial(self, small):
        with pytest.raises(ValueError):
            random_search(small, quick(), 0)
