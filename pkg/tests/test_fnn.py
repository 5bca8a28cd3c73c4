import numpy as np
import pytest

from microreserve.errors import ConfigError, DataError
from microreserve.fnn import (
    FnnConfig,
    FnnRows,
    build_training_rows,
    claim_period_features,
    feature_dim,
    load_fnn,
    predict_ocl_fnn,
    save_fnn,
    train_fnn,
    weighted_mse,
)

from conftest import build_claim, build_dataset


def settled_fixture():
    claims = [
        # J - d = 4 rows: notified dev 2, settled dev 5.
        build_claim(
            "f1",
            1,
            [
                (1.5, "Ma", 0.0, 100.0),
                (2.5, "P", 40.0, 60.0),
                (4.5, "PMa", 100.0, 0.0),
            ],
        ),
        build_claim(
            "f2",
            2,
            [(2.4, "P", 10.0, 10.0), (3.5, "PMa", 20.0, 0.0)],
        ),
    ]
    return build_dataset(claims, max_t=5)


class TestRows:
    def test_row_count_is_dev_periods_minus_delay(self):
        data = settled_fixture()
        cfg = FnnConfig(state_profile="minimal", alpha_w=1.0)
        rows = build_training_rows(data, 5, cfg)
        # f1: dev 2..5 -> 4 rows (J=5, d=1); f2: dev 2..3 -> 2 rows.
        assert rows.claim_nos.count("f1") == 4
        assert rows.claim_nos.count("f2") == 2

    def test_weight_at_scale_is_one(self):
        data = settled_fixture()
        cfg = FnnConfig(state_profile="minimal", alpha_w=1.0, s_scale=60.0)
        rows = build_training_rows(data, 5, cfg)
        i = rows.targets.tolist().index(60.0)
        assert rows.weights[i] == pytest.approx(1.0)

    def test_zero_ocl_rows_weigh_nothing(self):
        data = settled_fixture()
        cfg = FnnConfig(state_profile="minimal", alpha_w=1.0)
        rows = build_training_rows(data, 5, cfg)
        for y, w in zip(rows.targets, rows.weights):
            if y == 0.0:
                assert w == 0.0

    def test_alpha_zero_recovers_unit_weights(self):
        data = settled_fixture()
        rows = build_training_rows(data, 5, FnnConfig(state_profile="minimal", alpha_w=0.0))
        for y, w in zip(rows.targets, rows.weights):
            assert w == (1.0 if y > 0 else 0.0)

    def test_only_settled_claims_contribute(self):
        claims = [
            build_claim("s1", 1, [(1.5, "P", 5.0, 5.0), (2.5, "PMa", 10.0, 0.0)]),
            build_claim("o1", 1, [(1.5, "Ma", 0.0, 50.0), (2.5, "P", 10.0, 40.0)]),
        ]
        data = build_dataset(claims, max_t=3)
        rows = build_training_rows(data, 3, FnnConfig(state_profile="minimal"))
        assert set(rows.claim_nos) == {"s1"}

    def test_features_exclude_model_feedback(self):
        data = settled_fixture()
        claim = data.by_no("f1")
        feats = claim_period_features(claim, 2, "minimal")
        assert feats.shape == (feature_dim("minimal"),)
        assert feats.tolist() == [1.0, 2.0, 0.0]  # ap, dp, paid


class TestWeightedMse:
    def test_unit_weights_plain_mse(self):
        assert weighted_mse([1.0, 3.0], [0.0, 0.0], [1.0, 1.0]) == pytest.approx(5.0)

    def test_perfect_predictions(self):
        assert weighted_mse([2.0, 4.0], [2.0, 4.0], [1.0, 5.0]) == 0.0

    def test_hand_weighted_two_rows(self):
        # Oracle: (1*4 + 3*0) / 4 = 1.
        assert weighted_mse([2.0, 5.0], [0.0, 5.0], [1.0, 3.0]) == pytest.approx(1.0)

    def test_zero_weight_total_rejected(self):
        with pytest.raises(DataError):
            weighted_mse([1.0], [0.0], [0.0])


def linear_rows(n=400, seed=0) -> FnnRows:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 4.0, size=n)
    y = np.expm1(1.0 + 0.5 * x)  # exactly linear on the log1p scale
    feats = np.stack([np.full(n, 1.0), x, np.zeros(n)], axis=1)
    return FnnRows(
        features=feats,
        targets=y,
        weights=np.ones(n),
        claim_nos=[f"r{i}" for i in range(n)],
        s_scale=float(y.mean()),
    )


class TestTrain:
    def test_learns_linear_relation(self):
        # Oracle: exact least-squares fit is recoverable, so held-out
        # loss must fall well below the constant-predictor baseline.
        rows = linear_rows()
        cfg = FnnConfig(
            state_profile="minimal", hidden=(16,), lr=3e-3, max_epochs=60, patience=10, seed=4
        )
        model = train_fnn(rows, cfg)
        assert model.history[0][1] > model.history[-1][1]
        preds = model.predict(rows.features)
        rel = np.abs(preds - rows.targets) / rows.targets
        assert float(np.median(rel)) < 0.1

    def test_patience_zero_single_epoch(self):
        rows = linear_rows(n=60)
        cfg = FnnConfig(state_profile="minimal", patience=0, max_epochs=50, seed=1)
        model = train_fnn(rows, cfg)
        assert model.epochs_run == 1

    def test_same_seed_identical_weights(self):
        rows = linear_rows(n=80)
        cfg = FnnConfig(state_profile="minimal", max_epochs=5, patience=5, seed=9)
        m1 = train_fnn(rows, cfg)
        m2 = train_fnn(rows, cfg)
        for p1, p2 in zip(m1.net.parameters(), m2.net.parameters()):
            assert np.array_equal(p1, p2)

    def test_split_is_by_claim(self):
        # Rows sharing a claim_no never straddle the early-stop split.
        from microreserve.fnn import _split_by_claim

        rows = linear_rows(n=40)
        rows.claim_nos = [f"c{i // 4}" for i in range(40)]
        train_mask, val_mask = _split_by_claim(rows, np.random.default_rng(0))
        for claim in set(rows.claim_nos):
            idx = [i for i, cn in enumerate(rows.claim_nos) if cn == claim]
            assert len({bool(val_mask[i]) for i in idx}) == 1

    def test_dropout_validated(self):
        with pytest.raises(ConfigError):
            FnnConfig(dropout=1.0)


class TestPredict:
    def test_floor_at_zero(self):
        rows = linear_rows(n=60)
        cfg = FnnConfig(state_profile="minimal", max_epochs=1, patience=1, seed=2)
        model = train_fnn(rows, cfg)
        # Force a strongly negative output head.
        model.net.biases[-1][...] = -50.0
        model.net.weights[-1][...] = 0.0
        assert np.all(model.predict(rows.features[:5]) == 0.0)

    def test_open_claims_scored_at_valuation(self):
        claims = [
            build_claim("s1", 1, [(1.5, "P", 5.0, 5.0), (2.5, "PMa", 10.0, 0.0)]),
            build_claim("s2", 1, [(1.6, "P", 6.0, 6.0), (2.5, "PMa", 12.0, 0.0)]),
            build_claim("o1", 1, [(1.5, "Ma", 0.0, 50.0), (2.5, "P", 10.0, 40.0)]),
        ]
        data = build_dataset(claims, max_t=3)
        cfg = FnnConfig(state_profile="minimal", max_epochs=2, patience=2, seed=0)
        rows = build_training_rows(data, 3, cfg)
        model = train_fnn(rows, cfg)
        preds = predict_ocl_fnn(model, data, 3)
        assert set(preds) == {"o1"}
        assert preds["o1"] >= 0.0


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        rows = linear_rows(n=60)
        cfg = FnnConfig(state_profile="minimal", max_epochs=3, patience=3, seed=6)
        model = train_fnn(rows, cfg)
        save_fnn(model, str(tmp_path / "fnn"))
        again = load_fnn(str(tmp_path / "fnn"))
        x = rows.features[:7]
        assert np.array_equal(model.predict(x), again.predict(x))
