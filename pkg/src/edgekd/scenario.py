"""Synthetic multi-modal beam-tracking data.

Users follow a bounded angular random walk; each sample observes a short
history of two sensing modalities (a noisy nonlinear image-like embedding and
a compact radar-like embedding) and is labeled with the quantized beam index
for the current slot and each future slot. Per-node parameter shifts model
heterogeneous environments; a server-side parameter displacement models a
stale central dataset.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError, FormatError
from .numerics import Rng

ANGLE_LO = -math.pi / 2
ANGLE_HI = math.pi / 2

SCN_MAGIC = b"SCN1"
SCN_FORMAT_VERSION = 1

MODALITY_ORDER = ("img", "radar")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Bounded angular random walk: theta += drift + Normal(0, step_std).

    Each trajectory draws its own drift from Normal(drift, drift_jitter^2),
    so future-slot prediction has to infer the per-user drift from the
    observed history rather than memorize a global offset.
    """

    drift: float = 0.0
    step_std: float = 0.15
    drift_jitter: float = 0.25
    # scale (radians/step) of one unit of heterogeneity or staleness drift shift
    drift_unit: float = 0.12

    def __post_init__(self):
        if self.step_std < 0:
            raise ConfigError(f"step_std must be >= 0, got {self.step_std}",
                              "trajectory.step_std")
        if self.drift_jitter < 0:
            raise ConfigError(f"drift_jitter must be >= 0, got {self.drift_jitter}",
                              "trajectory.drift_jitter")
        if self.drift_unit < 0:
            raise ConfigError(f"drift_unit must be >= 0, got {self.drift_unit}",
                              "trajectory.drift_unit")


@dataclass(frozen=True)
class ModalityConfig:
    dim: int
    noise_std: float

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"modality dim must be >= 1, got {self.dim}", "dim")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}",
                              "noise_std")


@dataclass(frozen=True)
class ScenarioConfig:
    num_beams: int = 8
    num_slots: int = 4
    history_len: int = 3
    modalities: dict = field(default_factory=lambda: {
        "img": ModalityConfig(dim=24, noise_std=0.5),
        "radar": ModalityConfig(dim=4, noise_std=0.3),
    })
    num_nodes: int = 3
    samples_per_node: int = 2000
    samples_server: int = 12000
    samples_holdout: int = 500   # per node
    heterogeneity: float = 0.0
    staleness: float = 0.0
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)

    def __post_init__(self):
        if self.num_beams < 4:
            raise ConfigError(f"num_beams must be >= 4, got {self.num_beams}",
                              "num_beams")
        if self.num_slots < 1:
            raise ConfigError(f"num_slots must be >= 1, got {self.num_slots}",
                              "num_slots")
        if self.history_len < 1:
            raise ConfigError(f"history_len must be >= 1, got {self.history_len}",
                              "history_len")
        if self.num_nodes < 1:
            raise ConfigError(f"num_nodes must be >= 1, got {self.num_nodes}",
                              "num_nodes")
        mods = {}
        for name, m in self.modalities.items():
            if name not in MODALITY_ORDER:
                raise ConfigError(f"unknown modality {name!r}", "modalities")
            mods[name] = m if isinstance(m, ModalityConfig) else ModalityConfig(**m)
        if not mods:
            raise ConfigError("at least one modality must be enabled", "modalities")
        if "radar" in mods and mods["radar"].dim < 3:
            raise ConfigError("radar modality needs dim >= 3 for [sin, cos, rate]",
                              "modalities.radar.dim")
        object.__setattr__(self, "modalities", mods)
        if self.heterogeneity < 0 or self.staleness < 0:
            raise ConfigError("heterogeneity and staleness must be >= 0",
                              "heterogeneity")
        for size_field in ("samples_per_node", "samples_server", "samples_holdout"):
            if getattr(self, size_field) < 1:
                raise ConfigError(f"{size_field} must be >= 1", size_field)

    @property
    def input_dim(self) -> int:
        return sum(m.dim for m in self.modalities.values()) * self.history_len

    def enabled_modalities(self) -> tuple[str, ...]:
        return tuple(n for n in MODALITY_ORDER if n in self.modalities)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = {k: asdict(v) if isinstance(v, ModalityConfig) else v
                           for k, v in self.modalities.items()}
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "trajectory" in d and isinstance(d["trajectory"], dict):
            d["trajectory"] = TrajectoryConfig(**d["trajectory"])
        return ScenarioConfig(**d)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    seed: int
    server_set: Dataset
    per_node_sets: tuple[Dataset, ...]
    node_holdouts: tuple[Dataset, ...]

    @property
    def holdout_set(self) -> Dataset:
        """Union of the per-node holdout slices (current edge distributions)."""
        return Dataset.concat(list(self.node_holdouts))


def simulate_trajectory(cfg: ScenarioConfig, rng: Rng, length: int,
                        drift: float | None = None,
                        start: float | None = None) -> np.ndarray:
    """One bounded angular random walk of ``length`` steps."""
    if length < cfg.history_len + cfg.num_slots:
        raise ContractError(
            f"length {length} shorter than history_len + num_slots "
            f"({cfg.history_len + cfg.num_slots})")
    d = cfg.trajectory.drift if drift is None else drift
    theta = np.empty(length)
    theta[0] = rng.uniform(ANGLE_LO, ANGLE_HI) if start is None else start
    for t in range(1, length):
        eps = rng.normal(scale=cfg.trajectory.step_std) if cfg.trajectory.step_std > 0 else 0.0
        theta[t] = min(ANGLE_HI, max(ANGLE_LO, theta[t - 1] + d + eps))
    return theta


def beam_label(theta: float, num_beams: int) -> int:
    """Quantize an angle into one of ``num_beams`` uniform bins.

    Bins are half-open [lo, hi), so a bin boundary belongs to the bin whose
    lower edge it is; the top of the range maps to the last bin.
    """
    if not ANGLE_LO <= theta <= ANGLE_HI:
        raise ContractError(f"angle {theta} outside [{ANGLE_LO}, {ANGLE_HI}]")
    width = (ANGLE_HI - ANGLE_LO) / num_beams
    return min(int((theta - ANGLE_LO) / width), num_beams - 1)


def _beam_labels(theta: np.ndarray, num_beams: int) -> np.ndarray:
    width = (ANGLE_HI - ANGLE_LO) / num_beams
    return np.minimum(((theta - ANGLE_LO) / width).astype(np.int64), num_beams - 1)


class ModalityLift:
    """Scenario-fixed sensing model mapping angle histories to features.

    The img embedding is a bank of random tanh ridge functions of the angle;
    the radar embedding is [sin theta, cos theta, angular rate] zero-padded to
    its width. Features concatenate modality-major (img block then radar
    block), each block covering all history steps.
    """

    def __init__(self, cfg: ScenarioConfig, rng: Rng):
        self.cfg = cfg
        if "img" in cfg.modalities:
            d = cfg.modalities["img"].dim
            self.img_scale = rng.normal(shape=d, scale=2.0)
            self.img_phase = rng.uniform(-math.pi, math.pi, d)

    def render(self, histories: np.ndarray, rng: Rng) -> np.ndarray:
        """histories: (n, history_len) angles -> (n, input_dim) features."""
        cfg = self.cfg
        n, hist = histories.shape
        if hist != cfg.history_len:
            raise ContractError(f"history length {hist} != configured "
                                f"{cfg.history_len}")
        blocks = []
        for name in cfg.enabled_modalities():
            m = cfg.modalities[name]
            if name == "img":
                raw = np.tanh(histories[:, :, None] * self.img_scale
                              + self.img_phase)
            else:
                rate = np.zeros_like(histories)
                rate[:, 1:] = histories[:, 1:] - histories[:, :-1]
                raw = np.zeros((n, hist, m.dim))
                raw[:, :, 0] = np.sin(histories)
                raw[:, :, 1] = np.cos(histories)
                raw[:, :, 2] = rate
            if m.noise_std > 0:
                raw = raw + rng.normal(shape=raw.shape, scale=m.noise_std)
            blocks.append(raw.reshape(n, hist * m.dim))
        return np.concatenate(blocks, axis=1)


def render_modalities(theta_history, cfg: ScenarioConfig, rng: Rng) -> np.ndarray:
    """Features for one angle history, using lift parameters seeded from rng.

    The lift parameters are drawn from the "lift" child stream and the noise
    from the given stream, mirroring generate_scenario's wiring.
    """
    hist = np.asarray(theta_history, dtype=np.float64)
    lift = ModalityLift(cfg, rng.child("lift"))
    return lift.render(hist[None, :], rng)[0]


def _draw_dataset(cfg: ScenarioConfig, lift: ModalityLift, rng: Rng, n: int,
                  drift: float) -> Dataset:
    length = cfg.history_len + cfg.num_slots
    walk_rng = rng.child("walk")
    noise_rng = rng.child("noise")
    theta = np.empty((n, length))
    theta[:, 0] = walk_rng.uniform(ANGLE_LO, ANGLE_HI, n)
    std = cfg.trajectory.step_std
    jitter = cfg.trajectory.drift_jitter
    drifts = drift + (walk_rng.normal(shape=n, scale=jitter) if jitter > 0 else 0.0)
    for t in range(1, length):
        eps = walk_rng.normal(shape=n, scale=std) if std > 0 else 0.0
        theta[:, t] = np.clip(theta[:, t - 1] + drifts + eps, ANGLE_LO, ANGLE_HI)
    current = cfg.history_len - 1
    features = lift.render(theta[:, :cfg.history_len], noise_rng)
    labels = np.stack(
        [_beam_labels(theta[:, current + s], cfg.num_beams)
         for s in range(cfg.num_slots)], axis=1)
    return Dataset(features, labels, angles=theta)


def node_drifts(cfg: ScenarioConfig, seed: int) -> np.ndarray:
    """Per-node trajectory drifts under the heterogeneity knob."""
    base = Rng(seed)
    out = np.empty(cfg.num_nodes)
    for k in range(cfg.num_nodes):
        shift = base.child(f"node{k}/params").uniform(-1.0, 1.0)
        out[k] = cfg.trajectory.drift + cfg.heterogeneity * cfg.trajectory.drift_unit * shift
    return out


def server_drift(cfg: ScenarioConfig, seed: int) -> float:
    """Average of the current node drifts, displaced by the staleness knob."""
    base = Rng(seed)
    sign = 1.0 if base.child("server/params").uniform(0.0, 1.0) < 0.5 else -1.0
    return float(node_drifts(cfg, seed).mean()
                 + cfg.staleness * cfg.trajectory.drift_unit * sign)


def generate_scenario(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Draw server, per-node, and holdout datasets from disjoint streams.

    Each dataset has its own child stream, so regenerating one never perturbs
    another, and adding a node leaves existing nodes' draws unchanged.
    """
    base = Rng(seed)
    lift = ModalityLift(cfg, base.child("lift"))
    drifts = node_drifts(cfg, seed)
    per_node = tuple(
        _draw_dataset(cfg, lift, base.child(f"node{k}"), cfg.samples_per_node,
                      drifts[k])
        for k in range(cfg.num_nodes))
    holdouts = tuple(
        _draw_dataset(cfg, lift, base.child(f"holdout{k}"), cfg.samples_holdout,
                      drifts[k])
        for k in range(cfg.num_nodes))
    server = _draw_dataset(cfg, lift, base.child("server"), cfg.samples_server,
                           server_drift(cfg, seed))
    return Scenario(cfg, seed, server, per_node, holdouts)


# ---------------------------------------------------------------------------
# On-disk container (.scn): config echo + float32 features + uint16 labels
# ---------------------------------------------------------------------------

def dump_scenario(scenario: Scenario, path) -> None:
    cfg_json = json.dumps(
        {"config": scenario.config.to_dict(), "seed": scenario.seed},
        sort_keys=True).encode("utf-8")
    out = bytearray()
    out += struct.pack("<4sHI", SCN_MAGIC, SCN_FORMAT_VERSION, len(cfg_json))
    out += cfg_json
    datasets = [scenario.server_set, *scenario.per_node_sets,
                *scenario.node_holdouts]
    for ds in datasets:
        out += struct.pack("<I", len(ds))
        out += np.ascontiguousarray(ds.features, dtype="<f4").tobytes()
        out += np.ascontiguousarray(ds.labels, dtype="<u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_scenario(path) -> Scenario:
    """Read a .scn container; features come back at float32 precision and
    ground-truth angles are not persisted."""
    with open(path, "rb") as fh:
        payload = fh.read()
    head = struct.Struct("<4sHI")
    if len(payload) < head.size:
        raise FormatError(f"container truncated at byte {len(payload)}",
                          offset=len(payload))
    magic, version, cfg_len = head.unpack_from(payload, 0)
    if magic != SCN_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != SCN_FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}", offset=4)
    pos = head.size
    if len(payload) < pos + cfg_len:
        raise FormatError("config block truncated", offset=len(payload))
    meta = json.loads(payload[pos:pos + cfg_len].decode("utf-8"))
    cfg = ScenarioConfig.from_dict(meta["config"])
    pos += cfg_len
    dim, slots = cfg.input_dim, cfg.num_slots

    def read_dataset(pos: int):
        if len(payload) < pos + 4:
            raise FormatError("dataset header truncated", offset=len(payload))
        (n,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        f_bytes, l_bytes = 4 * n * dim, 2 * n * slots
        if len(payload) < pos + f_bytes + l_bytes:
            raise FormatError("dataset body truncated", offset=len(payload))
        feats = np.frombuffer(payload, dtype="<f4", count=n * dim, offset=pos)
        pos += f_bytes
        labs = np.frombuffer(payload, dtype="<u2", count=n * slots, offset=pos)
        pos += l_bytes
        return Dataset(feats.astype(np.float64).reshape(n, dim),
                       labs.astype(np.int64).reshape(n, slots)), pos

    server, pos = read_dataset(pos)
    nodes, holdouts = [], []
    for _ in range(cfg.num_nodes):
        ds, pos = read_dataset(pos)
        nodes.append(ds)
    for _ in range(cfg.num_nodes):
        ds, pos = read_dataset(pos)
        holdouts.append(ds)
    if pos != len(payload):
        raise FormatError(f"{len(payload) - pos} trailing bytes", offset=pos)
    return Scenario(cfg, int(meta["seed"]), server, tuple(nodes), tuple(holdouts))
