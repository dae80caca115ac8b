import numpy as np
import pytest

from snnadv import numerics
from snnadv.ann import AnnNet, Dense, build_mlp
from snnadv.attacks import (AttackConfig, AttackReport, auto_saga, fgsm, loss_input_grad,
                            margin_loss, mim, pgd, project, run_attack, saga)
from snnadv.errors import ConfigError


class TestProject:
    def test_inside_ball_unchanged(self):
        x = np.array([0.4, 0.5])
        x_adv = np.array([0.45, 0.48])
        assert np.array_equal(project(x_adv, x, 0.1), x_adv)

    def test_ball_face(self):
        assert project(np.array([0.9]), np.array([0.5]), 0.1)[0] == pytest.approx(0.6)

    def test_pixel_floor_dominates(self):
        assert project(np.array([-0.5]), np.array([0.0]), 0.2)[0] == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, size=(3, 4))
        x_adv = x + rng.uniform(-0.5, 0.5, size=x.shape)
        once = project(x_adv, x, 0.15)
        assert np.array_equal(project(once, x, 0.15), once)


class TestConfig:
    def test_step_cannot_exceed_budget(self):
        with pytest.raises(ConfigError):
            AttackConfig(eps_max=0.01, eps_step=0.05)

    def test_negative_alphas_rejected(self):
        with pytest.raises(ConfigError):
            AttackConfig(alphas=(0.5, -0.1))

    def test_invalid_iterations(self):
        with pytest.raises(ConfigError):
            AttackConfig(n_iter=0)


class TestFgsm:
    def test_zero_eps_returns_input(self, blob_net, blob_data):
        x, y = blob_data
        assert np.array_equal(fgsm(blob_net, x, y, 0.0), np.clip(x, 0, 1))

    def test_moves_each_pixel_by_eps_or_not_at_all(self, blob_net, blob_data):
        x, y = blob_data
        eps = 0.07
        _, grad = loss_input_grad(blob_net, x, y)
        x_adv = fgsm(blob_net, x, y, eps)
        raw = x + eps * np.sign(grad).astype(x.dtype)
        assert np.array_equal(x_adv, np.clip(raw, 0, 1))
        moved = np.abs(raw - x)
        assert np.all((moved <= 1e-9) | (np.abs(moved - eps) <= 1e-7))

    def test_logistic_toy_closed_form(self):
        # two-class linear model: logits = [w.x, 0]; for true class 0 the loss
        # gradient is -w * p1, so the attack moves along -sign(w)
        w = np.array([[2.0], [-1.0]], dtype=np.float32)
        logits_w = np.concatenate([w, np.zeros_like(w)], axis=1)
        net = AnnNet([Dense(logits_w)])
        x = np.array([[0.5, 0.5]], dtype=np.float32)
        y = np.array([0])
        eps = 0.1
        x_adv = fgsm(net, x, y, eps)
        assert np.allclose(x_adv, [[0.4, 0.6]], atol=1e-6)

    def test_zero_gradient_leaves_pixels_unchanged(self):
        net = AnnNet([Dense(np.zeros((3, 2), dtype=np.float32))])
        x = np.array([[0.2, 0.5, 0.8]], dtype=np.float32)
        assert np.array_equal(fgsm(net, x, np.array([0]), 0.3), x)


class TestPgd:
    def test_one_step_equals_fgsm(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.1, eps_step=0.1, n_iter=1, random_start=False)
        assert np.array_equal(pgd(blob_net, x, y, cfg), fgsm(blob_net, x, y, 0.1))

    def test_projection_invariant(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.12, eps_step=0.03, n_iter=8, seed=4)
        x_adv = pgd(blob_net, x, y, cfg)
        assert np.max(np.abs(x_adv - x)) <= 0.12 + 1e-6
        assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0

    def test_iterative_beats_single_step(self, blob_net, blob_data):
        x, y = blob_data
        single = fgsm(blob_net, x, y, 0.3)
        cfg = AttackConfig(eps_max=0.3, eps_step=0.05, n_iter=20, seed=0)
        multi = pgd(blob_net, x, y, cfg)
        rate = lambda adv: float((blob_net.predict(adv) != y).mean())
        assert rate(multi) >= rate(single)

    def test_seeded_determinism(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.1, eps_step=0.02, n_iter=5, seed=9)
        a = pgd(blob_net, x, y, cfg)
        b = pgd(blob_net, x, y, cfg)
        assert np.array_equal(a, b)


class TestMim:
    def test_mu_zero_equals_iterative_fgsm(self, blob_net, blob_data):
        x, y = blob_data
        steps = 5
        cfg = AttackConfig(eps_max=0.2, eps_step=0.04, n_iter=steps, mu=0.0)
        got = mim(blob_net, x, y, cfg)
        xi = np.clip(x, 0, 1)
        for _ in range(steps):
            _, g = loss_input_grad(blob_net, xi, y)
            xi = project(xi + (0.2 / steps) * np.sign(g).astype(x.dtype), x, 0.2)
        assert np.array_equal(got, xi)

    def test_constant_gradient_direction_matches_mu_zero(self):
        # linear two-class model: the loss-gradient direction never changes,
        # so momentum accumulation and fresh gradients share the same signs
        w = np.array([[2.0], [-1.0], [0.5]], dtype=np.float32)
        net = AnnNet([Dense(np.concatenate([w, np.zeros_like(w)], axis=1))])
        x = np.full((2, 3), 0.5, dtype=np.float32)
        y = np.array([0, 0])
        a = mim(net, x, y, AttackConfig(eps_max=0.2, eps_step=0.04, n_iter=5, mu=1.0))
        b = mim(net, x, y, AttackConfig(eps_max=0.2, eps_step=0.04, n_iter=5, mu=0.0))
        assert np.array_equal(a, b)

    def test_projection_invariant_every_iteration(self, blob_net, blob_data):
        x, y = blob_data
        trace = []
        mim(blob_net, x, y, AttackConfig(eps_max=0.15, eps_step=0.01, n_iter=6, mu=1.0),
            trace=trace)
        for step in trace:
            assert np.max(np.abs(step - x)) <= 0.15 + 1e-6
            assert step.min() >= 0.0 and step.max() <= 1.0

    def test_zero_gradient_guard(self):
        net = AnnNet([Dense(np.zeros((3, 2), dtype=np.float32))])
        x = np.array([[0.2, 0.5, 0.8]], dtype=np.float32)
        out = mim(net, x, np.array([0]), AttackConfig(eps_max=0.2, eps_step=0.04, n_iter=4))
        assert np.all(np.isfinite(out))
        assert np.array_equal(out, x)


class TestSaga:
    def test_single_model_equals_pgd(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=6, random_start=False)
        assert np.array_equal(saga([blob_net], [1.0], x, y, cfg),
                              pgd(blob_net, x, y, cfg))

    def test_zero_weight_removes_model(self, blob_net, blob_data):
        x, y = blob_data
        other = build_mlp([6, 10, 2], seed=99)
        cfg = AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=6, random_start=False)
        both = saga([blob_net, other], [1.0, 0.0], x, y, cfg)
        alone = saga([blob_net], [1.0], x, y, cfg)
        assert np.array_equal(both, alone)

    def test_negative_weight_rejected(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.1, eps_step=0.02, n_iter=2)
        with pytest.raises(ConfigError):
            saga([blob_net], [-1.0], x, y, cfg)

    def test_balanced_pair_runs_and_projects(self, blob_net, blob_data):
        x, y = blob_data
        other = build_mlp([6, 10, 2], seed=99)
        cfg = AttackConfig(eps_max=0.1, eps_step=0.02, n_iter=5)
        x_adv = saga([blob_net, other], [0.5, 0.5], x, y, cfg)
        assert np.max(np.abs(x_adv - x)) <= 0.1 + 1e-6


class TestMarginLoss:
    def test_sign_tracks_misclassification(self):
        logits = np.array([[2.0, 0.5, 0.1],    # correct, margin negative
                           [0.1, 3.0, 0.2]])   # wrong, margin positive
        labels = np.array([0, 0])
        # kappa=0 floors correct samples at exactly zero; positive iff fooled
        value, _ = margin_loss(logits, labels, kappa=0.0)
        assert value[0] == 0.0 and value[1] > 0.0
        value, _ = margin_loss(logits, labels, kappa=0.3)
        assert -0.3 <= value[0] < 0.0 < value[1]

    def test_floor_at_minus_kappa(self):
        logits = np.array([[5.0, 0.0]])
        value, dlogits = margin_loss(logits, np.array([0]), kappa=0.5)
        assert value[0] == pytest.approx(-0.5)
        assert np.array_equal(dlogits, np.zeros_like(dlogits))

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((3, 4))
        labels = np.array([0, 1, 2])

        def f(z):
            return float(margin_loss(z, labels, kappa=0.0)[0].sum())

        _, dlogits = margin_loss(logits, labels, kappa=0.0)
        fd = numerics.finite_difference_grad(f, logits, h=1e-6)
        assert numerics.max_rel_err(dlogits, fd) <= 1e-5


class TestAutoSaga:
    def test_single_model_direction_equals_pgd(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=6, random_start=False)
        tr_auto, tr_pgd = [], []
        auto_saga([blob_net], x, y, cfg, trace=tr_auto)
        pgd(blob_net, x, y, cfg, trace=tr_pgd)
        for a, b in zip(tr_auto, tr_pgd):
            assert np.array_equal(a, b)

    def test_coefficients_stay_on_simplex(self, blob_net, blob_data):
        x, y = blob_data
        other = build_mlp([6, 10, 2], seed=99)
        cfg = AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=8)
        _, hist = auto_saga([blob_net, other], x, y, cfg)
        assert np.all(hist >= 0.0)
        assert np.allclose(hist.sum(axis=2), 1.0, atol=1e-9)

    def test_duplicate_models_keep_balanced_coefficients(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=10)
        x_adv, hist = auto_saga([blob_net, blob_net], x, y, cfg)
        joint = float(np.all([blob_net.predict(x_adv) != y] * 2, axis=0).mean())
        single = float((blob_net.predict(pgd(blob_net, x, y,
                        AttackConfig(eps_max=0.15, eps_step=0.03, n_iter=10,
                                     random_start=False))) != y).mean())
        assert abs(joint - single) <= 0.05
        assert np.max(np.abs(hist.mean(axis=(0, 1)) - 0.5)) <= 0.05

    def test_raw_alpha_mode_skips_normalization(self, blob_net, blob_data):
        x, y = blob_data
        other = build_mlp([6, 10, 2], seed=99)
        cfg = AttackConfig(eps_max=0.1, eps_step=0.02, n_iter=4, normalize_alphas=False)
        _, hist = auto_saga([blob_net, other], x, y, cfg)
        sums = hist[-1].sum(axis=1)
        assert not np.allclose(sums, 1.0)


class TestReportAndFuzz:
    def test_report_joint_not_above_per_model(self, blob_net, blob_data):
        x, y = blob_data
        other = build_mlp([6, 10, 2], seed=99)
        cfg = AttackConfig(eps_max=0.25, eps_step=0.05, n_iter=8, seed=1)
        x_adv = pgd(blob_net, x, y, cfg)
        report = AttackReport.build([blob_net, other], x, x_adv, y, iterations=8)
        assert report.joint_rate <= report.per_model_rate.min() + 1e-12
        assert np.max(report.linf) <= 0.25 + 1e-6

    def test_run_attack_dispatch(self, blob_net, blob_data):
        x, y = blob_data
        cfg = AttackConfig(eps_max=0.1, eps_step=0.02, n_iter=2, random_start=False)
        for kind in ("fgsm", "pgd", "mim", "saga", "autosaga"):
            out = run_attack(kind, [blob_net], x, y, cfg)
            assert np.max(np.abs(out - x)) <= 0.1 + 1e-6
        with pytest.raises(ConfigError):
            run_attack("unknown", [blob_net], x, y, cfg)

    def test_projection_fuzz_small(self, blob_net, blob_data):
        # the acceptance suite runs the full 10^3-config version
        x, y = blob_data
        rng = np.random.default_rng(7)
        for _ in range(50):
            eps = float(rng.uniform(0.005, 0.6))
            cfg = AttackConfig(eps_max=eps, eps_step=float(rng.uniform(0.001, eps)),
                               n_iter=int(rng.integers(1, 4)),
                               seed=int(rng.integers(2**31)))
            x_adv = pgd(blob_net, x[:4], y[:4], cfg)
            assert np.max(np.abs(x_adv - x[:4])) <= eps + 1e-6
            assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0
