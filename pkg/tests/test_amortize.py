import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochamort.amortize import (
    ContextRecord,
    ModelConfig,
    OptimizerConfig,
    Thm1Config,
    build_label_dataset,
    init_model,
    load_checkpoint,
    predict,
    preprocess_labels,
    projected_sgd_runs,
    save_checkpoint,
    train_linear_thm1,
    train_regression,
)
from stochamort.errors import InvalidArgumentError, NumericalFailureError
from stochamort.estimators import NoisyLabelRecord, permutation_sampling
from stochamort.exact import exact_shapley
from stochamort.games import make_additive_game, random_table_game
from stochamort.theory import Thm1BoundInputs, gaussian_sigma_q, thm1_bound


def linear_fixture(n, d=10, m=5, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((m, d)) / np.sqrt(d)
    B = rng.standard_normal((n, d))
    truth = B @ W.T
    labels = truth + sigma * rng.standard_normal(truth.shape)
    ctx = [ContextRecord(f"c{i}", B[i]) for i in range(n)]
    recs = [NoisyLabelRecord(f"c{i}", "synthetic", 1, 0, labels[i], 1) for i in range(n)]
    return W, B, truth, ctx, recs


def val_records(B, W, sigma, seed, prefix="c"):
    rng = np.random.default_rng(seed)
    lab = B @ W.T + sigma * rng.standard_normal((B.shape[0], W.shape[0]))
    return [NoisyLabelRecord(f"{prefix}{i}", "synthetic", 1, seed, lab[i], 1) for i in range(B.shape[0])]


class TestModel:
    def test_linear_zero_context_gives_zero(self):
        model = init_model(ModelConfig(), 4, 2)
        model.params["W"] = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(predict(model, np.zeros(4)), 0.0)
        np.testing.assert_array_equal(predict(model, np.ones(4)), [6.0, 22.0])

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            predict(init_model(ModelConfig(), 4, 2), np.zeros(3))

    def test_nonfinite_context_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ContextRecord("x", [0.0, np.nan])

    @pytest.mark.parametrize("kind,bias", [("mlp", True), ("linear", True), ("linear", False)])
    def test_gradient_check(self, kind, bias):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((7, 3)), rng.standard_normal((7, 2))
        M = (rng.random((7, 2)) < 0.7).astype(float)
        for point in range(20):
            model = init_model(ModelConfig(kind=kind, hidden=5, bias=bias, seed=point), 3, 2)
            for v in model.params.values():
                v += rng.standard_normal(v.shape)
            _, grads = model.loss_and_grad(X, Y, M)
            for name, p in model.params.items():
                fd = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + 1e-6
                    up, _ = model.loss_and_grad(X, Y, M)
                    p[idx] = old - 1e-6
                    down, _ = model.loss_and_grad(X, Y, M)
                    p[idx] = old
                    fd[idx] = (up - down) / 2e-6
                scale = max(np.max(np.abs(fd)), 1.0)
                np.testing.assert_allclose(grads[name], fd, atol=1e-5 * scale, rtol=1e-5)

    def test_checkpoint_round_trip(self, tmp_path):
        model = init_model(ModelConfig(kind="mlp", hidden=6, seed=3), 4, 3)
        model.label_scale = 0.37
        save_checkpoint(tmp_path / "m.json", model)
        back = load_checkpoint(tmp_path / "m.json")
        x = np.random.default_rng(0).standard_normal((5, 4))
        assert back.predict(x).tobytes() == model.predict(x).tobytes()
        assert back.fingerprint() == model.fingerprint()


class TestTrainRegression:
    def test_noiseless_fit(self):
        W, B, truth, ctx, recs = linear_fixture(2000)
        Bh = np.random.default_rng(9).standard_normal((500, 10))
        vctx = [ContextRecord(f"v{i}", Bh[i]) for i in range(500)]
        model, _ = train_regression(
            recs, ctx, ModelConfig(), OptimizerConfig(epochs=30), val_records(Bh, W, 0.0, 1, "v"), vctx
        )
        assert np.mean((model.predict(Bh) - Bh @ W.T) ** 2) < 1e-6
        # training contexts reproduced too
        np.testing.assert_allclose(model.predict(B), truth, atol=1e-6)

    def test_denoising(self):
        W, B, truth, ctx, recs = linear_fixture(2000, sigma=1.0, seed=2)
        Bh = np.random.default_rng(10).standard_normal((500, 10))
        vctx = [ContextRecord(f"v{i}", Bh[i]) for i in range(500)]
        model, _ = train_regression(
            recs, ctx, ModelConfig(), OptimizerConfig(epochs=30), val_records(Bh, W, 1.0, 3, "v"), vctx
        )
        label_mse = np.mean((np.stack([r.label for r in recs]) - truth) ** 2)
        amort_mse = np.mean((model.predict(Bh) - Bh @ W.T) ** 2)
        assert amort_mse <= 0.1 * label_mse

    def test_zero_epochs_returns_init(self):
        _, _, _, ctx, recs = linear_fixture(50)
        cfg = ModelConfig(kind="mlp", hidden=8, seed=4)
        model, log = train_regression(recs, ctx, cfg, OptimizerConfig(epochs=0), recs)
        init = init_model(cfg, 10, 5)
        for k in init.params:
            np.testing.assert_array_equal(model.params[k], init.params[k])
        assert log.best_epoch == 0

    def test_nonfinite_loss_raises(self):
        _, _, _, ctx, recs = linear_fixture(40)
        with np.errstate(all="ignore"), pytest.raises(NumericalFailureError, match="epoch 1, batch 1"):
            train_regression(recs, ctx, ModelConfig(), OptimizerConfig(epochs=3, learning_rate=1e200), recs)

    def test_missing_context(self):
        _, _, _, ctx, recs = linear_fixture(5)
        with pytest.raises(InvalidArgumentError):
            train_regression(recs, ctx[:3], ModelConfig(), OptimizerConfig(epochs=1), recs)

    def test_deterministic(self):
        _, _, _, ctx, recs = linear_fixture(100, sigma=0.5)
        cfg = ModelConfig(kind="mlp", hidden=8)
        a, _ = train_regression(recs, ctx, cfg, OptimizerConfig(epochs=3), recs)
        b, _ = train_regression(recs, ctx, cfg, OptimizerConfig(epochs=3), recs)
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()

    def test_per_class_heads_use_only_labeled_output(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((300, 3))
        cls = rng.integers(0, 2, 300)
        coef = np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.5]])
        ctx = [ContextRecord(f"p{i}", X[i], int(cls[i])) for i in range(300)]
        recs = [NoisyLabelRecord(f"p{i}", "synthetic", 1, 0, [X[i] @ coef[cls[i]]], 1) for i in range(300)]
        model, _ = train_regression(recs, ctx, ModelConfig(), OptimizerConfig(epochs=40), recs)
        assert model.output_dim == 2
        np.testing.assert_allclose(model.params["W"], coef, atol=1e-4)

    def test_objective_decomposition(self):
        # noisy objective minus the known noise level matches the clean objective
        sigma, m = 1.0, 5
        W, B, truth, ctx, recs = linear_fixture(2000, sigma=sigma, seed=5)
        model, _ = train_regression(recs, ctx, ModelConfig(), OptimizerConfig(epochs=10), recs)
        pred = model.predict(B)
        clean = np.mean(np.sum((pred - truth) ** 2, axis=1))
        rng = np.random.default_rng(6)
        noisy = [
            np.mean(np.sum((pred - truth - sigma * rng.standard_normal(truth.shape)) ** 2, axis=1)) for _ in range(50)
        ]
        se = np.std(noisy, ddof=1) / np.sqrt(50)
        assert abs(np.mean(noisy) - m * sigma**2 - clean) <= 2 * se


class TestPreprocess:
    def records(self):
        rng = np.random.default_rng(0)
        return [NoisyLabelRecord(f"c{i}", "x", 1, 0, rng.standard_normal(3), 1) for i in range(20)]

    def test_none_is_identity(self):
        recs = self.records()
        out, scale = preprocess_labels(recs, "none")
        assert scale == 1.0 and all(a is b for a, b in zip(out, recs))

    def test_global_rescale_is_scale_free(self):
        recs = self.records()
        out1, s1 = preprocess_labels(recs, "global_std_rescale")
        scaled = [NoisyLabelRecord(r.context_id, "x", 1, 0, 7.5 * r.label, 1) for r in recs]
        out2, s2 = preprocess_labels(scaled, "global_std_rescale")
        assert s2 == pytest.approx(7.5 * s1)
        for a, b in zip(out1, out2):
            np.testing.assert_allclose(a.label, b.label, rtol=1e-12)
        # the original records are untouched
        assert recs[0].label is not out1[0].label

    def test_scale_round_trip_through_predict(self):
        W, B, truth, ctx, recs = linear_fixture(400)
        scaled = [NoisyLabelRecord(r.context_id, "x", 1, 0, 50.0 * r.label, 1) for r in recs]
        pre, scale = preprocess_labels(scaled, "global_std_rescale")
        model, _ = train_regression(pre, ctx, ModelConfig(), OptimizerConfig(epochs=40), pre, label_scale=scale)
        np.testing.assert_allclose(model.predict(B), 50.0 * truth, atol=1e-4)

    def test_unit_norm(self):
        recs = self.records() + [NoisyLabelRecord("zero", "x", 1, 0, np.zeros(3), 1)]
        with pytest.warns(UserWarning, match="zero-norm"):
            out, _ = preprocess_labels(recs, "per_label_unit_norm")
        assert len(out) == 20 and all(r.biased for r in out)
        np.testing.assert_allclose([np.linalg.norm(r.label) for r in out], 1.0, atol=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(InvalidArgumentError):
            preprocess_labels(self.records(), "whiten")


class TestLabelDataset:
    def test_accounting_and_determinism(self):
        games = {f"g{i}": random_table_game(6, np.random.default_rng(i)) for i in range(100)}
        ctx = [ContextRecord(cid, [float(i)]) for i, cid in enumerate(games)]
        oracle = lambda c, seed: permutation_sampling(games[c.context_id], 4, seed)
        a = build_label_dataset(ctx, oracle, 3)
        b = build_label_dataset(ctx, oracle, 3, workers=4)
        assert len(a) == 100 and all(r.evals_used == 4 * 7 for r in a)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_noiseless_oracle_gives_truth(self):
        g = make_additive_game([1.0, 2.0, 3.0])
        ctx = [ContextRecord("a", [0.0])]
        recs = build_label_dataset(ctx, lambda c, s: NoisyLabelRecord("", "exact", 0, s, exact_shapley(g), 8), 0)
        np.testing.assert_allclose(recs[0].label, [1.0, 2.0, 3.0], atol=1e-12)

    def test_duplicate_ids(self):
        with pytest.raises(InvalidArgumentError):
            build_label_dataset([ContextRecord("a", [0.0])] * 2, lambda c, s: None, 0)


class TestProjectedSGD:
    def test_weights_t3(self):
        np.testing.assert_allclose(Thm1Config(1.0, 2.0, 3).averaging_weights(), [1 / 6, 1 / 3, 1 / 2], atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5000))
    def test_weights_sum_to_one(self, T):
        assert abs(Thm1Config(1.0, 2.0, T).averaging_weights().sum() - 1.0) < 1e-12

    def test_invalid_config(self):
        for args in [(0.0, 1.0, 5), (1.0, 0.0, 5), (1.0, 1.0, 0)]:
            with pytest.raises(InvalidArgumentError):
                Thm1Config(*args)

    def test_projection_keeps_iterates_in_ball(self):
        rng = np.random.default_rng(0)
        D = 0.3
        W = rng.standard_normal((3, 5))  # truth well outside the ball
        B = rng.standard_normal((400, 5))
        model, trace = train_linear_thm1(B, Thm1Config(D, 2.0, 1000, mode="stored"), 1, labels=B @ W.T)
        assert np.all(trace["norms"] <= D + 1e-12)
        assert np.linalg.norm(model.params["W"]) <= D + 1e-12

    def test_averaging_matches_explicit_sum(self):
        rng = np.random.default_rng(2)
        cfg = Thm1Config(1.0, 2.0, 7)
        B, A = rng.standard_normal((1, 7, 4)), rng.standard_normal((1, 7, 2))
        theta, iterates = np.zeros((2, 4)), []
        for t in range(1, 8):
            resid = theta @ B[0, t - 1] - A[0, t - 1]
            theta = theta - cfg.step_size(t) * 2 * np.outer(resid, B[0, t - 1])
            theta *= min(1.0, 1.0 / np.linalg.norm(theta))
            iterates.append(theta.copy())
        expected = sum(w * th for w, th in zip(cfg.averaging_weights(), iterates))
        out = projected_sgd_runs(B, A, cfg)
        np.testing.assert_allclose(out["averaged"][7][0], expected, atol=1e-14)
        np.testing.assert_allclose(out["final"][0], iterates[-1], atol=1e-14)

    def test_noiseless_below_bound(self):
        d, m, T = 5, 3, 1000
        rng = np.random.default_rng(4)
        W = rng.standard_normal((m, d))
        W *= 0.8 / np.linalg.norm(W)
        B = rng.standard_normal((20000, d))
        excess = []
        for r in range(20):
            model, _ = train_linear_thm1(B, Thm1Config(1.0, 2.0, T, mode="stored"), r, labels=B @ W.T)
            excess.append(np.sum((model.params["W"] - W) ** 2))
        lam_q = np.linalg.eigvalsh(gaussian_sigma_q(d)).max()
        bound = thm1_bound(Thm1BoundInputs(float(d), 1.0, float(lam_q), 0.0, 1.0, T))
        assert np.mean(excess) <= bound

    def test_redraw_requires_oracle(self):
        with pytest.raises(InvalidArgumentError):
            train_linear_thm1(np.ones((3, 2)), Thm1Config(1.0, 1.0, 5), 0)

    def test_redraw_mode(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((50, 3))
        W = np.array([[0.2, -0.1, 0.3]])
        oracle = lambda i, g: B[i] @ W.T + g.standard_normal(1)
        m1, t1 = train_linear_thm1(B, Thm1Config(1.0, 2.0, 200), 7, oracle=oracle)
        m2, _ = train_linear_thm1(B, Thm1Config(1.0, 2.0, 200), 7, oracle=oracle)
        assert m1.params["W"].tobytes() == m2.params["W"].tobytes()
        assert t1["running_objective"].shape == (200,)
