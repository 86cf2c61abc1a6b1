import numpy as np
import pytest

from rumnet.data import ChoiceDataset, ChoiceEvent
from rumnet.models import MNLModel, build_model
from rumnet.training import (
    Adam,
    EarlyStopper,
    TrainConfig,
    TrainingDivergenceError,
    accuracy,
    aggregate,
    event_loss,
    fit,
    kfold,
    split_703015,
    FitReport,
)
from test_data import toy_dataset


def mnl_dataset(beta, T, n=5, seed=0):
    """Events whose choices follow the softmax of beta' x exactly."""
    rng = np.random.default_rng(seed)
    d = beta.shape[0]
    events = []
    for _ in range(T):
        X = rng.normal(size=(n, d))
        u = X @ beta
        g = -np.log(-np.log(rng.random(n)))
        events.append(ChoiceEvent(np.zeros(0), X, np.ones(n, bool),
                                  int(np.argmax(u + g))))
    return ChoiceDataset(events)


class TestEventLoss:
    def test_uniform_unaffected_by_renormalization(self):
        v = event_loss(np.array([0.5, 0.5]), 0, np.ones(2, bool), 1e-4)
        assert v == pytest.approx(np.log(2), abs=1e-12)

    def test_zero_probability_stays_finite(self):
        v = event_loss(np.array([1.0, 0.0]), 1, np.ones(2, bool), 1e-4)
        assert v == pytest.approx(-np.log(1e-4 / 1.0002), rel=1e-12)
        assert v == pytest.approx(9.21054035197885, abs=1e-10)

    def test_tolerance_zero_plain_log(self):
        v = event_loss(np.array([1 / 6, 1 / 3, 1 / 2]), 2, np.ones(3, bool), 0.0)
        assert v == pytest.approx(np.log(2), abs=1e-12)

    def test_chosen_unavailable_raises(self):
        with pytest.raises(ValueError, match="unavailable"):
            event_loss(np.array([1.0, 0.0]), 1, np.array([True, False]), 1e-4)

    def test_nonnegative_and_finite_on_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(2, 7)
            p = rng.dirichlet(np.ones(n))
            v = event_loss(p, int(rng.integers(n)), np.ones(n, bool), 1e-4)
            assert np.isfinite(v) and v >= 0


class TestAccuracy:
    def test_perfect_predictor(self):
        # strongly separated utilities make argmax equal the generator's pick
        ds = toy_dataset(seed=1, T=6, d_x=2, d_z=0, n=3)
        events = []
        for e in ds:
            X = np.zeros((3, 2))
            X[e.chosen, 0] = 50.0
            events.append(ChoiceEvent(e.customer, X, e.available, e.chosen))
        model = MNLModel(np.array([1.0, 0.0]))
        assert accuracy(model, ChoiceDataset(events)) == 1.0

    def test_single_wrong_event(self):
        X = np.array([[5.0], [0.0]])
        ds = ChoiceDataset([ChoiceEvent(np.zeros(0), X, np.ones(2, bool), 1)])
        assert accuracy(MNLModel(np.array([1.0])), ds) == 0.0

    def test_uniform_model_hits_one_over_kappa(self):
        ds = mnl_dataset(np.zeros(3), T=10_000, n=5, seed=2)
        acc = accuracy(MNLModel(np.zeros(3)), ds)
        # ties broken to index 0; choices are uniform, so still Bernoulli(1/5)
        assert acc == pytest.approx(0.2, abs=0.012)


class TestAdam:
    def test_single_step_descends_quadratic(self):
        x = np.array([3.0])
        opt = Adam([x], learning_rate=1e-3)
        before = 0.5 * float(x[0] ** 2)
        opt.step([x.copy()])  # gradient of 0.5 x^2 is x
        after = 0.5 * float(x[0] ** 2)
        assert after < before

    def test_converges_on_quadratic(self):
        x = np.array([3.0])
        opt = Adam([x], learning_rate=0.05)
        for _ in range(2000):
            opt.step([x.copy()])
        assert abs(x[0]) < 1e-3


class TestEarlyStopper:
    def test_stops_exactly_after_patience(self):
        stopper = EarlyStopper(patience=3)
        seq = [1.0, 0.8, 0.9, 0.9, 0.9]  # best at epoch 1, then 3 bad epochs
        stops = [stopper.update(e, v) for e, v in enumerate(seq)]
        assert stops == [False, False, False, False, True]
        assert stopper.best_epoch == 1

    def test_equal_loss_counts_as_no_improvement(self):
        stopper = EarlyStopper(patience=2)
        assert not stopper.update(0, 1.0)
        assert not stopper.update(1, 1.0)
        assert stopper.update(2, 1.0)
        assert stopper.best_epoch == 0


class TestFit:
    def test_zero_like_lr_keeps_params(self):
        ds = mnl_dataset(np.array([1.0, -1.0]), T=60, seed=3)
        tr, va, te = split_703015(ds, seed=0)
        model = MNLModel(np.array([0.5, 0.5]))
        before = model.beta.copy()
        cfg = TrainConfig(epochs=3, patience=3, learning_rate=1e-300, seed=1)
        report = fit(model, tr, va, cfg)
        np.testing.assert_allclose(model.beta, before, atol=1e-290)
        assert max(report.val_history) - min(report.val_history) < 1e-9

    def test_same_seed_bit_identical_report(self):
        ds = mnl_dataset(np.array([1.0, -1.0]), T=80, seed=4)
        tr, va, te = split_703015(ds, seed=0)
        reports = []
        for _ in range(2):
            model = build_model("deepmnl", 2, 0, np.random.default_rng(7),
                                depth=1, width=3)
            cfg = TrainConfig(epochs=5, patience=5, seed=11)
            reports.append(fit(model, tr, va, cfg, test=te))
        assert reports[0] == reports[1]

    def test_restores_best_epoch_weights(self):
        ds = mnl_dataset(np.array([2.0, -2.0]), T=120, seed=5)
        tr, va, te = split_703015(ds, seed=0)
        model = MNLModel(np.zeros(2))
        cfg = TrainConfig(epochs=30, patience=4, seed=2)
        report = fit(model, tr, va, cfg)
        assert report.val_history[report.best_epoch] == min(report.val_history)
        # final val metric equals the best recorded epoch's val loss
        assert report.final["val_loss"] == pytest.approx(
            report.val_history[report.best_epoch], abs=1e-12)

    def test_learns_mnl_recovery(self):
        beta = np.array([1.5, -1.0, 0.5])
        ds = mnl_dataset(beta, T=2000, seed=6)
        tr, va, te = split_703015(ds, seed=1)
        model = MNLModel(np.zeros(3))
        cfg = TrainConfig(epochs=60, patience=10, seed=3)
        report = fit(model, tr, va, cfg, test=te)
        bayes = dataset_loss_from_truth(beta, te)
        assert report.final["test_loss"] <= bayes + 0.05

    def test_divergence_diagnostic_names_epoch_and_batch(self):
        ds = mnl_dataset(np.array([1.0]), T=40, seed=7)
        tr, va, _ = split_703015(ds, seed=0)
        model = MNLModel(np.array([1e308]))  # softmax still finite, loss explodes
        model.beta[0] = np.nan
        cfg = TrainConfig(epochs=2, patience=2, seed=0)
        with pytest.raises(TrainingDivergenceError, match="epoch 0, batch 0"):
            fit(model, tr, va, cfg)

    def test_train_history_nonincreasing_early(self):
        # linear-truth synthetic data: the first five epochs should descend
        # for nearly every shuffle seed
        from rumnet.synthetic import draw_ground_truth, generate
        gt = draw_ground_truth(1, 20, np.random.default_rng(8))
        ds = generate(gt, T=1000, kappa=5, seed=8)
        tr, va, _ = split_703015(ds, seed=2)
        drops = 0
        for seed in range(10):
            model = MNLModel(np.zeros(22))
            cfg = TrainConfig(epochs=5, patience=5, seed=seed)
            report = fit(model, tr, va, cfg)
            diffs = np.diff(report.train_history)
            if (diffs <= 1e-9).all():
                drops += 1
        assert drops >= 9


def dataset_loss_from_truth(beta, dataset):
    total = 0.0
    for e in dataset:
        u = e.products @ beta
        p = np.exp(u - u.max())
        p /= p.sum()
        total += -np.log(p[e.chosen])
    return total / len(dataset)


class TestSplits:
    def test_100_events(self):
        ds = toy_dataset(seed=9, T=100)
        tr, va, te = split_703015(ds, seed=0)
        assert (len(tr), len(va), len(te)) == (70, 15, 15)

    def test_10719_sizes(self):
        ds = mnl_dataset(np.array([1.0]), T=10719, n=2, seed=10)
        tr, va, te = split_703015(ds, seed=0)
        assert (len(tr), len(va), len(te)) == (7505, 1607, 1607)

    def test_partition_covers_all_disjointly(self):
        ds = toy_dataset(seed=11, T=53)
        tr, va, te = split_703015(ds, seed=5)
        ids = [id(e) for part in (tr, va, te) for e in part]
        assert len(ids) == 53
        assert len(set(ids)) == 53
        assert set(ids) == {id(e) for e in ds}

    def test_too_small_rejected(self):
        ds = toy_dataset(seed=12, T=9)
        with pytest.raises(ValueError, match="too small"):
            split_703015(ds, seed=0)


class TestKfold:
    def test_ten_folds_of_100(self):
        ds = toy_dataset(seed=13, T=100)
        folds = kfold(ds, k=10, seed=0)
        assert len(folds) == 10
        assert all((len(a), len(b), len(c)) == (70, 15, 15) for a, b, c in folds)

    def test_folds_differ(self):
        ds = toy_dataset(seed=14, T=100)
        folds = kfold(ds, k=3, seed=0)
        first = [id(e) for e in folds[0][0]]
        second = [id(e) for e in folds[1][0]]
        assert first != second

    def test_k_below_two_rejected(self):
        with pytest.raises(ValueError, match="k must be"):
            kfold(toy_dataset(seed=15, T=100), k=1, seed=0)


class TestAggregate:
    def test_identical_reports(self):
        r = FitReport([1.0], [1.0], 0, {"test_loss": 0.5, "test_acc": 0.8})
        agg = aggregate([r, r, r])
        assert agg["test_loss"] == {"mean": 0.5, "std": 0.0}

    def test_mean_of_two(self):
        r1 = FitReport([], [], 0, {"test_loss": 0.5})
        r2 = FitReport([], [], 0, {"test_loss": 0.7})
        assert aggregate([r1, r2])["test_loss"]["mean"] == pytest.approx(0.6)

    def test_none_metrics_skipped(self):
        r = FitReport([], [], 0, {"test_loss": None, "val_loss": 1.0})
        agg = aggregate([r])
        assert "test_loss" not in agg and "val_loss" in agg


class TestConfigFile:
    def test_parse_and_override(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("epochs = 40\nlearning_rate = 0.01  # fast\n\nseed = 5\n")
        cfg = TrainConfig.from_file(p, learning_rate=0.002)
        assert cfg.epochs == 40
        assert cfg.learning_rate == 0.002
        assert cfg.seed == 5

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("momentum = 0.9\n")
        with pytest.raises(ValueError, match="unknown config key"):
            TrainConfig.from_file(p)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError, match="patience"):
            TrainConfig(epochs=5, patience=6)
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)


class TestReportCsv:
    def test_history_and_summary_files(self, tmp_path):
        r = FitReport([1.0, 0.9], [1.1, 0.95], 1,
                      {"train_loss": 0.9, "val_loss": 0.95, "test_loss": None,
                       "train_acc": 0.5, "val_acc": 0.45, "test_acc": None})
        hp, sp = tmp_path / "h.csv", tmp_path / "s.csv"
        r.write_history_csv(hp)
        r.write_summary_csv(sp)
        lines = hp.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert lines[1].startswith("0,1.0,1.1")
        assert "best_epoch" in sp.read_text().splitlines()[0]
