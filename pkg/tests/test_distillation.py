import numpy as np
import pytest

from edgekd.data import Dataset
from edgekd.distillation import (
    KDConfig,
    RehearsalSet,
    TrainConfig,
    combined_loss,
    distill_offline,
    feature_kd_loss,
    finetune_rehearsal,
    horizon_weights_linear,
    mutual_learn,
    relation_kd_loss,
    response_kd_loss,
    self_distill,
    train_supervised,
)
from edgekd.errors import ConfigError, ContractError
from edgekd.models import ModelSpec, forward, init_model, serialize
from edgekd.numerics import Rng, kl_divergence, softmax_t


def toy_dataset(n=120, seed=31, slots=1, beams=2):
    """Linearly separable 2-feature task; labels repeat across slots."""
    rng = Rng(seed)
    x = rng.uniform(-1.0, 1.0, (n, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(np.int64)
    if beams > 2:
        y = np.minimum((beams * (x[:, 0] + x[:, 1] + 2) / 4).astype(np.int64),
                       beams - 1)
    return Dataset(x, np.tile(y[:, None], (1, slots)))


def bitwise_equal(a, b):
    return all((p == q).all() for p, q in zip(a.params, b.params))


class TestResponseLoss:
    def test_identical_logits_zero(self):
        z = [Rng(1).normal(shape=(3, 4))]
        assert response_kd_loss(z, z, 2.0) < 1e-12

    def test_zero_weights_zero_exactly(self):
        rng = Rng(2)
        s = [rng.normal(shape=(3, 4)) for _ in range(2)]
        t = [rng.normal(shape=(3, 4)) for _ in range(2)]
        assert response_kd_loss(s, t, 2.0, [0.0, 0.0]) == 0.0

    def test_composes_from_kl_at_unit_temperature(self):
        s = [np.array([[1.0, 0.0]])]
        t = [np.array([[0.0, 1.0]])]
        expected = kl_divergence(softmax_t(t[0], 1.0), softmax_t(s[0], 1.0))
        assert abs(response_kd_loss(s, t, 1.0) - expected) < 1e-15

    def test_temperature_squared_scaling(self):
        rng = Rng(3)
        s = [rng.normal(shape=(4, 5))]
        t = [rng.normal(shape=(4, 5))]
        base = kl_divergence(softmax_t(t[0], 3.0), softmax_t(s[0], 3.0))
        assert abs(response_kd_loss(s, t, 3.0) - 9.0 * base) < 1e-12

    def test_nonnegative(self):
        rng = Rng(4)
        for _ in range(100):
            s = [rng.normal(shape=(2, 4), scale=3.0)]
            t = [rng.normal(shape=(2, 4), scale=3.0)]
            assert response_kd_loss(s, t, float(rng.uniform(0.5, 8.0))) >= 0.0

    def test_slot_count_mismatch(self):
        z = Rng(5).normal(shape=(2, 3))
        with pytest.raises(Exception, match="slots"):
            response_kd_loss([z], [z, z], 1.0)


class TestRelationLoss:
    def test_identical_batches_zero(self):
        f = Rng(6).normal(shape=(5, 4))
        assert relation_kd_loss(f, f) < 1e-12

    def test_scale_invariance_with_normalization(self):
        rng = Rng(7)
        fs = rng.normal(shape=(6, 3))
        assert relation_kd_loss(fs, 3.0 * fs, normalize=True) < 1e-10

    def test_matches_double_loop_oracle(self):
        rng = Rng(8)
        fs = rng.normal(shape=(4, 3))
        ft = rng.normal(shape=(4, 5))

        def dmat(f):
            b = f.shape[0]
            d = np.zeros((b, b))
            for i in range(b):
                for j in range(b):
                    d[i, j] = np.sqrt(((f[i] - f[j]) ** 2).sum())
            return d

        ds, dt = dmat(fs), dmat(ft)
        off = ~np.eye(4, dtype=bool)
        ds, dt = ds / ds[off].mean(), dt / dt[off].mean()
        expected = ((ds - dt)[off] ** 2).mean()
        assert abs(relation_kd_loss(fs, ft, normalize=True) - expected) < 1e-12

    def test_permutation_invariance(self):
        rng = Rng(9)
        fs = rng.normal(shape=(6, 4))
        ft = rng.normal(shape=(6, 3))
        perm = rng.permutation(6)
        a = relation_kd_loss(fs, ft)
        b = relation_kd_loss(fs[perm], ft[perm])
        assert abs(a - b) < 1e-12

    def test_single_row_rejected(self):
        with pytest.raises(ContractError):
            relation_kd_loss(np.ones((1, 3)), np.ones((1, 3)))

    def test_degenerate_batch_rejected(self):
        f = np.ones((3, 2))
        with pytest.raises(ContractError, match="degenerate"):
            relation_kd_loss(f, f, normalize=True)


class TestFeatureLoss:
    def test_identical_zero(self):
        f = Rng(10).normal(shape=(4, 3))
        assert feature_kd_loss(f, f) == 0.0

    def test_zero_projection_zero_teacher(self):
        fs = Rng(11).normal(shape=(4, 3))
        assert feature_kd_loss(fs, np.zeros((4, 5)), np.zeros((5, 3))) == 0.0

    def test_identity_projection_equals_mse(self):
        rng = Rng(12)
        fs = rng.normal(shape=(4, 3))
        ft = rng.normal(shape=(4, 3))
        expected = float(((fs - ft) ** 2).mean())
        assert abs(feature_kd_loss(fs, ft, np.eye(3)) - expected) < 1e-12

    def test_width_mismatch_without_projection(self):
        with pytest.raises(ConfigError):
            feature_kd_loss(np.zeros((2, 3)), np.zeros((2, 4)))


class TestCombinedLoss:
    def test_endpoints_and_midpoint(self):
        assert combined_loss(2.0, 4.0, 0.0) == 2.0
        assert combined_loss(2.0, 4.0, 1.0) == 4.0
        assert combined_loss(2.0, 4.0, 0.5) == 3.0

    def test_linear_in_alpha(self):
        rng = Rng(13)
        for _ in range(100):
            t, k, a = (float(v) for v in rng.uniform(0, 3, 3))
            a = min(a / 3.0, 1.0)
            assert combined_loss(t, k, a) == (1.0 - a) * t + a * k

    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError):
            combined_loss(1.0, 1.0, 1.5)


class TestHorizonWeights:
    def test_linear_schedule_rises_to_far_horizon(self):
        w = horizon_weights_linear(4, near=0.25, far=1.0)
        assert w == (0.25, 0.5, 0.75, 1.0)

    def test_length_must_match_slots(self):
        ds = toy_dataset(slots=2)
        spec = ModelSpec(2, (4,), 2, 2)
        teacher, _ = train_supervised(spec, ds, TrainConfig(1, 30, 0.1), Rng(0))
        bad = KDConfig(knowledge="response", alpha=0.5, horizon_weights=(1.0,))
        with pytest.raises(Exception, match="horizon"):
            distill_offline(teacher, spec, ds, bad, TrainConfig(1, 30, 0.1), Rng(1))


class TestTrainSupervised:
    def test_zero_lr_is_fixed_point(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (4,), 1, 2)
        cfg = TrainConfig(epochs=1, batch_size=30, lr=0.0)
        model, _ = train_supervised(spec, ds, cfg, Rng(40))
        init = init_model(spec, Rng(40).child(cfg.stream).child("init"))
        assert bitwise_equal(model, init)

    def test_separable_task_reaches_95_percent(self):
        ds = toy_dataset(n=100)
        spec = ModelSpec(2, (6,), 1, 2)
        model, hist = train_supervised(spec, ds, TrainConfig(200, 25, 0.3), Rng(41),
                                       holdout=ds)
        assert hist[-1]["holdout_top1"] >= 0.95

    def test_same_seed_identical_history(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (4,), 1, 2)
        cfg = TrainConfig(epochs=3, batch_size=30, lr=0.2)
        _, h1 = train_supervised(spec, ds, cfg, Rng(42), holdout=ds)
        _, h2 = train_supervised(spec, ds, cfg, Rng(42), holdout=ds)
        assert h1 == h2

    def test_empty_dataset_rejected(self):
        spec = ModelSpec(2, (4,), 1, 2)
        empty = Dataset(np.zeros((0, 2)), np.zeros((0, 1), dtype=np.int64))
        with pytest.raises(ContractError):
            train_supervised(spec, empty, TrainConfig(1, 1, 0.1), Rng(43))

    def test_batch_larger_than_dataset_rejected(self):
        ds = toy_dataset(n=10)
        with pytest.raises(ContractError):
            train_supervised(ModelSpec(2, (4,), 1, 2), ds,
                             TrainConfig(1, 11, 0.1), Rng(44))


class TestDistillOffline:
    def setup_method(self):
        self.ds = toy_dataset(n=150, beams=4)
        self.t_spec = ModelSpec(2, (16,), 1, 4)
        self.s_spec = ModelSpec(2, (5,), 1, 4)
        self.teacher, _ = train_supervised(self.t_spec, self.ds,
                                           TrainConfig(40, 30, 0.3), Rng(50))

    def test_alpha_zero_reduces_to_supervised(self):
        cfg = TrainConfig(5, 30, 0.2)
        kd = KDConfig(knowledge="response", alpha=0.0)
        a = distill_offline(self.teacher, self.s_spec, self.ds, kd, cfg, Rng(51))
        b, _ = train_supervised(self.s_spec, self.ds, cfg, Rng(51))
        assert bitwise_equal(a, b)

    def test_pure_distillation_reduces_kl_to_teacher(self):
        cfg = TrainConfig(30, 30, 0.3)
        kd = KDConfig(knowledge="response", temperature=1.0, alpha=1.0)
        student = distill_offline(self.teacher, self.t_spec, self.ds, kd, cfg, Rng(52))
        initial = init_model(self.t_spec, Rng(52).child(cfg.stream).child("init"))
        t_probs = softmax_t(forward(self.teacher, self.ds.features).logits_per_slot[0], 1.0)

        def kl_to_teacher(m):
            q = softmax_t(forward(m, self.ds.features).logits_per_slot[0], 1.0)
            return kl_divergence(t_probs, q)

        assert kl_to_teacher(student) < kl_to_teacher(initial)

    def test_teacher_parameters_untouched(self):
        before = serialize(self.teacher)
        for knowledge in ("response", "feature", "relation"):
            kd = KDConfig(knowledge=knowledge, alpha=0.7)
            distill_offline(self.teacher, self.s_spec, self.ds, kd,
                            TrainConfig(2, 30, 0.2), Rng(53))
        assert serialize(self.teacher) == before

    def test_feature_kd_uses_projection_for_width_mismatch(self):
        kd = KDConfig(knowledge="feature", alpha=0.5)
        model = distill_offline(self.teacher, self.s_spec, self.ds, kd,
                                TrainConfig(3, 30, 0.2), Rng(54))
        assert model.spec == self.s_spec

    def test_feature_kd_width_mismatch_without_projection(self):
        kd = KDConfig(knowledge="feature", alpha=0.5, feature_projection=False)
        with pytest.raises(ConfigError):
            distill_offline(self.teacher, self.s_spec, self.ds, kd,
                            TrainConfig(1, 30, 0.2), Rng(55))

    def test_slot_mismatch_rejected(self):
        bad = ModelSpec(2, (5,), 2, 4)
        with pytest.raises(ConfigError):
            distill_offline(self.teacher, bad, toy_dataset(slots=2, beams=4),
                            KDConfig(), TrainConfig(1, 30, 0.2), Rng(56))


class TestSelfDistill:
    def test_alpha_zero_reduces_to_supervised(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (5,), 1, 2)
        cfg = TrainConfig(6, 30, 0.2, self_kd_snapshot_every=2)
        a = self_distill(spec, ds, KDConfig(alpha=0.0), cfg, Rng(60))
        b, _ = train_supervised(spec, ds, cfg, Rng(60))
        assert bitwise_equal(a, b)

    def test_cadence_beyond_epochs_reduces_to_supervised(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (5,), 1, 2)
        cfg = TrainConfig(4, 30, 0.2, self_kd_snapshot_every=10)
        a = self_distill(spec, ds, KDConfig(alpha=0.5), cfg, Rng(61))
        b, _ = train_supervised(spec, ds, cfg, Rng(61))
        assert bitwise_equal(a, b)

    def test_snapshot_phase_changes_training(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (5,), 1, 2)
        cfg = TrainConfig(8, 30, 0.2, self_kd_snapshot_every=2)
        a = self_distill(spec, ds, KDConfig(alpha=0.5), cfg, Rng(62))
        b, _ = train_supervised(spec, ds, cfg, Rng(62))
        assert not bitwise_equal(a, b)


class TestMutualLearn:
    def test_identical_peers_stay_identical(self):
        ds = toy_dataset()
        spec = ModelSpec(2, (5,), 1, 2)
        models = mutual_learn([spec, spec], [ds, ds], KDConfig(alpha=0.5),
                              TrainConfig(4, 30, 0.2), Rng(70))
        assert bitwise_equal(models[0], models[1])

    def test_alpha_zero_equals_independent_supervised(self):
        ds_a = toy_dataset(seed=71)
        ds_b = toy_dataset(seed=72)
        spec = ModelSpec(2, (5,), 1, 2)
        cfg = TrainConfig(3, 30, 0.2)
        models = mutual_learn([spec, spec], [ds_a, ds_b], KDConfig(alpha=0.0),
                              cfg, Rng(73))
        solo_a, _ = train_supervised(spec, ds_a, cfg, Rng(73))
        solo_b, _ = train_supervised(spec, ds_b, cfg, Rng(73))
        assert bitwise_equal(models[0], solo_a)
        assert bitwise_equal(models[1], solo_b)

    def test_three_heterogeneous_peers_run(self):
        specs = [ModelSpec(2, (5,), 1, 2)] * 3
        datasets = [toy_dataset(seed=s) for s in (74, 75, 76)]
        models = mutual_learn(specs, datasets, KDConfig(alpha=0.4),
                              TrainConfig(3, 30, 0.2), Rng(77))
        assert len(models) == 3
        assert not bitwise_equal(models[0], models[1])

    def test_single_peer_rejected(self):
        with pytest.raises(ConfigError):
            mutual_learn([ModelSpec(2, (5,), 1, 2)], [toy_dataset()],
                         KDConfig(), TrainConfig(1, 30, 0.2), Rng(78))

    def test_relation_knowledge_rejected(self):
        specs = [ModelSpec(2, (5,), 1, 2)] * 2
        with pytest.raises(ConfigError):
            mutual_learn(specs, [toy_dataset(), toy_dataset()],
                         KDConfig(knowledge="relation"), TrainConfig(1, 30, 0.2),
                         Rng(79))


class TestFinetuneRehearsal:
    def setup_method(self):
        self.ds = toy_dataset(n=90, beams=4)
        self.spec = ModelSpec(2, (6,), 1, 4)
        self.model, _ = train_supervised(self.spec, self.ds,
                                         TrainConfig(10, 30, 0.2), Rng(80))

    def test_zero_epochs_keeps_parameters(self):
        out = finetune_rehearsal(self.model, self.ds, None, KDConfig(alpha=0.5),
                                 TrainConfig(0, 30, 0.2), Rng(81))
        assert bitwise_equal(out, self.model)

    def test_rehearsal_term_changes_result(self):
        logits = forward(self.model, self.ds.features[:20]).logits_per_slot
        reh = RehearsalSet(self.ds.features[:20], self.ds.labels[:20], logits)
        cfg = TrainConfig(3, 30, 0.2)
        with_reh = finetune_rehearsal(self.model, self.ds, reh,
                                      KDConfig(alpha=0.5), cfg, Rng(82))
        without = finetune_rehearsal(self.model, self.ds, None,
                                     KDConfig(alpha=0.5), cfg, Rng(82))
        assert not bitwise_equal(with_reh, without)
