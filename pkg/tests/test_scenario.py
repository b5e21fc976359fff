import math

import numpy as np
import pytest

from edgekd.data import Dataset
from edgekd.distillation import TrainConfig, train_supervised
from edgekd.errors import ConfigError, ContractError, FormatError
from edgekd.models import ModelSpec
from edgekd.numerics import Rng
from edgekd.scenario import (
    ANGLE_HI,
    ANGLE_LO,
    ModalityConfig,
    ScenarioConfig,
    TrajectoryConfig,
    beam_label,
    dump_scenario,
    generate_scenario,
    load_scenario,
    node_drifts,
    render_modalities,
    server_drift,
    simulate_trajectory,
)


def small_config(**overrides):
    kw = dict(num_nodes=2, samples_per_node=200, samples_server=300,
              samples_holdout=100)
    kw.update(overrides)
    return ScenarioConfig(**kw)


class TestTrajectory:
    def test_no_noise_no_drift_is_constant(self):
        cfg = small_config(trajectory=TrajectoryConfig(drift=0.0, step_std=0.0))
        theta = simulate_trajectory(cfg, Rng(1), 20, start=0.3)
        assert (theta == 0.3).all()

    def test_pure_drift_is_monotone_until_clamp(self):
        cfg = small_config(trajectory=TrajectoryConfig(drift=0.2, step_std=0.0))
        theta = simulate_trajectory(cfg, Rng(2), 30, start=0.0)
        diffs = np.diff(theta)
        assert (diffs >= 0).all()
        assert theta[-1] == ANGLE_HI

    def test_mean_step_matches_drift(self):
        # statistical oracle: mean of 1e4 steps within 3 sigma / sqrt(n)
        cfg = small_config(trajectory=TrajectoryConfig(drift=0.0, step_std=0.005))
        theta = simulate_trajectory(cfg, Rng(3), 10001, start=0.0)
        steps = np.diff(theta)
        assert abs(steps.mean()) < 3 * 0.005 / math.sqrt(10000)

    def test_too_short_rejected(self):
        with pytest.raises(ContractError):
            simulate_trajectory(small_config(), Rng(4), 3)


class TestBeamLabel:
    def test_lower_edge(self):
        assert beam_label(ANGLE_LO, 8) == 0

    def test_just_below_upper_edge(self):
        assert beam_label(ANGLE_HI - 1e-9, 8) == 7

    def test_upper_edge_maps_to_last_bin(self):
        assert beam_label(ANGLE_HI, 8) == 7

    def test_zero_belongs_to_bin_above(self):
        # interval arithmetic oracle: bins are [lo + i*w, lo + (i+1)*w) with
        # w = pi/8, so 0 is the lower edge of bin 4
        width = math.pi / 8
        edges = [ANGLE_LO + i * width for i in range(9)]
        oracle = next(i for i in range(8) if edges[i] <= 0.0 < edges[i + 1])
        assert beam_label(0.0, 8) == oracle == 4

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            beam_label(2.0, 8)

    def test_labels_cover_all_bins(self):
        labels = {beam_label(ANGLE_LO + i * (math.pi / 80), 8) for i in range(80)}
        assert labels == set(range(8))


class TestRenderModalities:
    def test_deterministic_given_history_and_stream(self):
        cfg = small_config(modalities={"img": ModalityConfig(8, 0.0),
                                       "radar": ModalityConfig(4, 0.0)})
        hist = [0.1, 0.2, 0.3]
        a = render_modalities(hist, cfg, Rng(5))
        b = render_modalities(hist, cfg, Rng(5))
        assert (a == b).all()

    def test_input_dim_shrinks_without_img(self):
        both = small_config()
        radar_only = small_config(modalities={"radar": ModalityConfig(4, 0.10)})
        d_img = both.modalities["img"].dim
        assert both.input_dim - radar_only.input_dim == d_img * both.history_len

    def test_radar_block_encodes_angle_and_rate(self):
        cfg = small_config(modalities={"radar": ModalityConfig(4, 0.0)})
        hist = np.array([0.1, 0.25, 0.15])
        feats = render_modalities(hist, cfg, Rng(6)).reshape(3, 4)
        assert np.allclose(feats[:, 0], np.sin(hist))
        assert np.allclose(feats[:, 1], np.cos(hist))
        assert np.allclose(feats[1:, 2], np.diff(hist))
        assert (feats[:, 3] == 0).all()  # zero padding

    def test_noiseless_radar_predicts_current_slot_with_1nn(self):
        # the current-slot label is decodable from one noiseless radar step
        cfg = ScenarioConfig(
            num_nodes=1, samples_per_node=1000, samples_server=50,
            samples_holdout=300, history_len=1,
            modalities={"radar": ModalityConfig(4, 0.0)})
        scn = generate_scenario(cfg, 9)
        train, test = scn.per_node_sets[0], scn.node_holdouts[0]
        # brute-force 1-NN oracle
        d2 = ((test.features[:, None, :] - train.features[None, :, :]) ** 2).sum(-1)
        pred = train.labels[d2.argmin(axis=1), 0]
        assert (pred == test.labels[:, 0]).mean() >= 0.99


class TestGenerateScenario:
    def test_identity_of_distribution_parameters_when_homogeneous(self):
        cfg = small_config(heterogeneity=0.0, staleness=0.0)
        drifts = node_drifts(cfg, 11)
        assert (drifts == cfg.trajectory.drift).all()
        assert server_drift(cfg, 11) == cfg.trajectory.drift

    def test_bit_identical_regeneration(self):
        cfg = small_config()
        a = generate_scenario(cfg, 12)
        b = generate_scenario(cfg, 12)
        assert (a.server_set.features == b.server_set.features).all()
        assert (a.server_set.labels == b.server_set.labels).all()
        for x, y in zip(a.per_node_sets, b.per_node_sets):
            assert (x.features == y.features).all()

    def test_labels_match_stored_angles(self):
        cfg = small_config()
        scn = generate_scenario(cfg, 13)
        current = cfg.history_len - 1
        for ds in (scn.server_set, *scn.per_node_sets, *scn.node_holdouts):
            for s in range(cfg.num_slots):
                expected = [beam_label(a, cfg.num_beams)
                            for a in ds.angles[:, current + s]]
                assert (ds.labels[:, s] == expected).all()

    def test_class_coverage_with_default_config(self):
        cfg = ScenarioConfig()
        assert cfg.samples_per_node >= 2000
        scn = generate_scenario(cfg, 14)
        for ds in (scn.server_set, *scn.per_node_sets):
            for s in range(cfg.num_slots):
                assert set(np.unique(ds.labels[:, s])) == set(range(cfg.num_beams))

    def test_feature_width_shared_across_sets(self):
        scn = generate_scenario(small_config(), 15)
        dims = {ds.input_dim for ds in
                (scn.server_set, *scn.per_node_sets, *scn.node_holdouts)}
        assert dims == {scn.config.input_dim}

    def test_adding_a_node_leaves_existing_nodes_unchanged(self):
        cfg2 = small_config(num_nodes=2)
        cfg3 = small_config(num_nodes=3)
        a = generate_scenario(cfg2, 16)
        b = generate_scenario(cfg3, 16)
        for k in range(2):
            assert (a.per_node_sets[k].features == b.per_node_sets[k].features).all()
            assert (a.per_node_sets[k].labels == b.per_node_sets[k].labels).all()

    def test_heterogeneity_separates_node_drifts(self):
        drifts = node_drifts(small_config(heterogeneity=1.0), 17)
        assert len(set(np.round(drifts, 12))) == len(drifts)

    def test_staleness_shifts_server_drift(self):
        cfg0 = small_config(staleness=0.0)
        cfg2 = small_config(staleness=2.0)
        assert server_drift(cfg0, 18) == 0.0
        assert abs(server_drift(cfg2, 18)) == pytest.approx(
            2.0 * cfg2.trajectory.drift_unit)

    def test_stale_server_data_degrades_teacher_on_node_holdout(self):
        # end-to-end measurement defining the staleness knob's effect
        spec_kw = dict(num_nodes=1, samples_per_node=50, samples_server=1500,
                       samples_holdout=500)
        gaps = []
        for seed in (1, 2, 3):
            accs = {}
            for staleness in (0.0, 3.0):
                cfg = small_config(staleness=staleness, **spec_kw)
                scn = generate_scenario(cfg, seed)
                spec = ModelSpec(cfg.input_dim, (24,), cfg.num_slots, cfg.num_beams)
                model, _ = train_supervised(spec, scn.server_set,
                                            TrainConfig(10, 50, 0.15),
                                            Rng(seed).child("teacher"))
                from edgekd.metrics import evaluate_topk
                per = evaluate_topk(model, scn.node_holdouts[0], (1,))
                accs[staleness] = np.mean([v for v in per.values()])
            gaps.append(accs[0.0] - accs[3.0])
        assert float(np.mean(gaps)) >= 0.05

    def test_unknown_modality_rejected(self):
        with pytest.raises(ConfigError):
            small_config(modalities={"lidar": ModalityConfig(4, 0.1)})

    def test_radar_needs_three_dims(self):
        with pytest.raises(ConfigError):
            small_config(modalities={"radar": ModalityConfig(2, 0.1)})


class TestScnContainer:
    def test_roundtrip_bytes_identical(self, tmp_path):
        scn = generate_scenario(small_config(), 19)
        p1, p2 = tmp_path / "a.scn", tmp_path / "b.scn"
        dump_scenario(scn, p1)
        dump_scenario(load_scenario(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loaded_features_are_float32_precise(self, tmp_path):
        scn = generate_scenario(small_config(), 20)
        path = tmp_path / "s.scn"
        dump_scenario(scn, path)
        loaded = load_scenario(path)
        assert loaded.seed == 19 + 1
        expected = scn.server_set.features.astype(np.float32).astype(np.float64)
        assert (loaded.server_set.features == expected).all()
        assert (loaded.server_set.labels == scn.server_set.labels).all()

    def test_config_echo_preserved(self, tmp_path):
        cfg = small_config(heterogeneity=0.5, staleness=0.25)
        scn = generate_scenario(cfg, 21)
        path = tmp_path / "s.scn"
        dump_scenario(scn, path)
        assert load_scenario(path).config == cfg

    def test_corrupt_magic_rejected(self, tmp_path):
        scn = generate_scenario(small_config(), 22)
        path = tmp_path / "s.scn"
        dump_scenario(scn, path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as exc:
            load_scenario(path)
        assert exc.value.offset == 0

    def test_truncation_rejected(self, tmp_path):
        scn = generate_scenario(small_config(), 23)
        path = tmp_path / "s.scn"
        dump_scenario(scn, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError):
            load_scenario(path)
