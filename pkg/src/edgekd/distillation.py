"""Distillation losses and training schemes.

Three kinds of transferred knowledge are supported: softened output
distributions (response), intermediate activations (feature), and pairwise
inter-sample distances in the tapped representation (relation). Training
schemes cover plain supervised runs, offline distillation from a frozen
teacher, self-distillation from epoch snapshots, synchronous mutual learning
between peers, and rehearsal-based fine-tuning against cached teacher logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError, DimensionError
from .models import Model, ModelSpec, backward, forward_cached, init_model
from .numerics import (
    Rng,
    as_matrix,
    kl_divergence,
    matmul_acc,
    sgd_step,
    softmax_ce_grad,
    softmax_t,
)

KNOWLEDGE_KINDS = ("response", "feature", "relation", "none")

# Guard against division by a zero pairwise distance; only reached when two
# feature rows coincide, where the true contribution is zero anyway.
_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class KDConfig:
    """What to distill and how strongly.

    alpha mixes the distillation term against the task term; horizon_weights
    set the per-slot emphasis of the distillation term (None means uniform
    1.0), which is how "lean on the teacher for far-future slots" schedules
    are expressed.
    """

    knowledge: str = "response"
    temperature: float = 2.0
    alpha: float = 0.5
    horizon_weights: tuple[float, ...] | None = None
    feature_projection: bool = True
    relation_normalize: bool = True

    def __post_init__(self):
        if self.knowledge not in KNOWLEDGE_KINDS:
            raise ConfigError(f"unknown knowledge kind {self.knowledge!r}", "knowledge")
        if self.knowledge == "response" and not self.temperature >= 1e-3:
            raise ConfigError(
                f"temperature must be >= 1e-3, got {self.temperature}", "temperature")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}", "alpha")
        if self.horizon_weights is not None:
            hw = tuple(float(w) for w in self.horizon_weights)
            if any(not 0.0 <= w <= 1.0 for w in hw):
                raise ConfigError(f"horizon_weights must lie in [0, 1], got {hw}",
                                  "horizon_weights")
            object.__setattr__(self, "horizon_weights", hw)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    stream: str = "train"
    self_kd_snapshot_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}", "epochs")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}",
                              "batch_size")
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}", "lr")
        if self.self_kd_snapshot_every < 1:
            raise ConfigError("self_kd_snapshot_every must be >= 1",
                              "self_kd_snapshot_every")


def horizon_weights_linear(num_slots: int, near: float = 0.25, far: float = 1.0):
    """Per-slot weights rising linearly from the current slot to the furthest."""
    if num_slots == 1:
        return (float(far),)
    return tuple(near + (far - near) * s / (num_slots - 1) for s in range(num_slots))


def _resolve_horizon_weights(cfg: KDConfig, num_slots: int) -> np.ndarray:
    if cfg.horizon_weights is None:
        return np.ones(num_slots)
    if len(cfg.horizon_weights) != num_slots:
        raise DimensionError(
            f"{len(cfg.horizon_weights)} horizon weights for {num_slots} slots")
    return np.asarray(cfg.horizon_weights, dtype=np.float64)


# ---------------------------------------------------------------------------
# KD losses
# ---------------------------------------------------------------------------

def response_kd_loss(student_logits, teacher_logits, temperature: float,
                     horizon_weights=None) -> float:
    """Sum over slots of w_s * T^2 * KL(soft teacher || soft student).

    Both sides are softened at the same temperature; the T^2 factor keeps the
    gradient magnitude comparable across temperatures.
    """
    if len(student_logits) != len(teacher_logits):
        raise DimensionError(f"{len(student_logits)} student slots vs "
                             f"{len(teacher_logits)} teacher slots")
    w = np.ones(len(student_logits)) if horizon_weights is None else \
        np.asarray(horizon_weights, dtype=np.float64)
    if w.shape[0] != len(student_logits):
        raise DimensionError(f"{w.shape[0]} horizon weights for "
                             f"{len(student_logits)} slots")
    total = 0.0
    for s, (sl, tl) in enumerate(zip(student_logits, teacher_logits)):
        if w[s] == 0.0:
            continue
        slm, tlm = as_matrix(sl, "student logits"), as_matrix(tl, "teacher logits")
        if slm.shape != tlm.shape:
            raise DimensionError(f"slot {s}: student {slm.shape} vs teacher {tlm.shape}")
        p = softmax_t(tlm, temperature)
        q = softmax_t(slm, temperature)
        total += w[s] * temperature ** 2 * kl_divergence(p, q)
    return float(total)


def _response_grad_from_probs(student_logits, target_probs, temperature, weights):
    """Loss and dL/d(student logits) for KL(target || soft student) per slot.

    The analytic gradient assumes no probability falls below the KL clamp,
    which holds for the moderate logits produced during training.
    """
    loss = 0.0
    grads = []
    for s, (sl, p) in enumerate(zip(student_logits, target_probs)):
        if weights[s] == 0.0:
            grads.append(None)
            continue
        q = softmax_t(sl, temperature)
        loss += weights[s] * temperature ** 2 * kl_divergence(p, q)
        grads.append(weights[s] * temperature * (q - p) / sl.shape[0])
    return float(loss), grads


def _pairwise_distances(feats: np.ndarray) -> np.ndarray:
    diff = feats[:, None, :] - feats[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(np.maximum(d2, 0.0))
    np.fill_diagonal(d, 0.0)
    return d


def _off_diag_mask(n: int) -> np.ndarray:
    m = ~np.eye(n, dtype=bool)
    return m


def relation_kd_loss(student_feats, teacher_feats, normalize: bool = True) -> float:
    """Mean squared difference of pairwise-distance matrices.

    With ``normalize`` each matrix is divided by its mean off-diagonal entry,
    making the loss invariant to a positive rescaling of either feature batch
    and well defined when the two widths differ.
    """
    loss, _ = _relation_grad(as_matrix(student_feats, "student_feats"),
                             as_matrix(teacher_feats, "teacher_feats"),
                             normalize, want_grad=False)
    return loss


def _relation_grad(fs: np.ndarray, ft: np.ndarray, normalize: bool,
                   want_grad: bool = True):
    b = fs.shape[0]
    if b < 2 or ft.shape[0] != b:
        raise ContractError(
            f"relation loss needs matching batches of >= 2 rows, got "
            f"{fs.shape[0]} and {ft.shape[0]}")
    ds = _pairwise_distances(fs)
    dt = _pairwise_distances(ft)
    mask = _off_diag_mask(b)
    m = mask.sum()
    if normalize:
        mu_s = ds[mask].mean()
        mu_t = dt[mask].mean()
        if mu_s <= 0.0 or mu_t <= 0.0:
            raise ContractError("degenerate batch: zero mean pairwise distance")
        dsn, dtn = ds / mu_s, dt / mu_t
    else:
        mu_s = 1.0
        dsn, dtn = ds, dt
    resid = np.where(mask, dsn - dtn, 0.0)
    loss = float((resid ** 2).sum() / m)
    if not want_grad:
        return loss, None
    g = 2.0 * resid / m  # dL/d(normalized student distances)
    dl_dd = g / mu_s
    if normalize:
        dl_dd = dl_dd - (g * dsn).sum() / (m * mu_s)
        dl_dd = np.where(mask, dl_dd, 0.0)
    h = dl_dd + dl_dd.T
    coef = h / np.maximum(ds, _DIST_FLOOR)
    np.fill_diagonal(coef, 0.0)
    dfs = coef.sum(axis=1)[:, None] * fs - matmul_acc(coef, fs)
    return loss, dfs


def feature_kd_loss(student_feats, teacher_feats, projection=None) -> float:
    """Mean squared error between (projected) student and teacher features."""
    loss, _, _ = _feature_grad(as_matrix(student_feats, "student_feats"),
                               as_matrix(teacher_feats, "teacher_feats"),
                               projection, want_grad=False)
    return loss


def _feature_grad(fs: np.ndarray, ft: np.ndarray, projection, want_grad: bool = True):
    if fs.shape[0] != ft.shape[0]:
        raise DimensionError(f"student batch {fs.shape} vs teacher batch {ft.shape}")
    if projection is None:
        if fs.shape[1] != ft.shape[1]:
            raise ConfigError(
                f"feature widths differ ({fs.shape[1]} vs {ft.shape[1]}) and no "
                "projection is configured", "feature_projection")
        proj_out = fs
    else:
        p = as_matrix(projection, "projection")
        if p.shape != (ft.shape[1], fs.shape[1]):
            raise DimensionError(
                f"projection {p.shape} does not map width {fs.shape[1]} to "
                f"{ft.shape[1]}")
        proj_out = matmul_acc(fs, np.ascontiguousarray(p.T))
    diff = proj_out - ft
    n = diff.size
    loss = float((diff ** 2).sum() / n)
    if not want_grad:
        return loss, None, None
    dd = 2.0 * diff / n
    if projection is None:
        return loss, dd, None
    dfs = matmul_acc(dd, as_matrix(projection))
    dproj = matmul_acc(np.ascontiguousarray(dd.T), fs)
    return loss, dfs, dproj


def combined_loss(task_loss: float, kd_loss: float, alpha: float) -> float:
    """(1 - alpha) * task + alpha * kd."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}", "alpha")
    return (1.0 - alpha) * task_loss + alpha * kd_loss


# ---------------------------------------------------------------------------
# Training engine
# ---------------------------------------------------------------------------

def _batches(n: int, batch_size: int, shuffle_rng: Rng):
    order = shuffle_rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _task_grads(result, labels, scale: float):
    """Cross-entropy summed over slots; gradients pre-scaled by ``scale``."""
    loss = 0.0
    dlogits = []
    for s, logits in enumerate(result.logits_per_slot):
        l, g = softmax_ce_grad(logits, labels[:, s])
        loss += l
        dlogits.append(g if scale == 1.0 else scale * g)
    return loss, dlogits


class _KDTerm:
    """Per-batch distillation term: loss plus gradients w.r.t. logits/tap."""

    def __init__(self, spec: ModelSpec, kd_cfg: KDConfig, tap_dim_teacher: int | None,
                 rng: Rng):
        self.cfg = kd_cfg
        self.weights = _resolve_horizon_weights(kd_cfg, spec.num_slots)
        self.projection = None
        if (kd_cfg.knowledge == "feature" and tap_dim_teacher is not None
                and tap_dim_teacher != spec.tap_dim):
            if not kd_cfg.feature_projection:
                raise ConfigError(
                    f"feature widths differ ({spec.tap_dim} vs {tap_dim_teacher}) "
                    "and feature_projection is disabled", "feature_projection")
            a = np.sqrt(6.0 / (spec.tap_dim + tap_dim_teacher))
            self.projection = rng.uniform(-a, a, (tap_dim_teacher, spec.tap_dim))

    def compute(self, result, target):
        """target: (probs_per_slot or None, teacher_tap or None)."""
        cfg = self.cfg
        target_probs, teacher_tap = target
        if cfg.knowledge == "response":
            loss, grads = _response_grad_from_probs(
                result.logits_per_slot, target_probs, cfg.temperature, self.weights)
            return loss, grads, None, None
        if cfg.knowledge == "feature":
            loss, dtap, dproj = _feature_grad(result.tap_features, teacher_tap,
                                              self.projection)
            return loss, None, dtap, dproj
        if cfg.knowledge == "relation":
            loss, dtap = _relation_grad(result.tap_features, teacher_tap,
                                        cfg.relation_normalize)
            return loss, None, dtap, None
        raise ConfigError(f"knowledge kind {cfg.knowledge!r} has no loss", "knowledge")


def _train_epoch(spec, params, dataset, batch_size, lr, shuffle_rng,
                 kd_term=None, target_fn=None, alpha=0.0):
    """One pass over the data; returns (params, mean combined loss)."""
    kd_active = kd_term is not None
    task_scale = (1.0 - alpha) if kd_active else 1.0
    losses = []
    for idx in _batches(len(dataset), batch_size, shuffle_rng):
        x = dataset.features[idx]
        labels = dataset.labels[idx]
        result, acts = forward_cached(spec, params, x)
        task_loss, dlogits = _task_grads(result, labels, task_scale)
        dtap = None
        kd_loss = 0.0
        if kd_active:
            kd_loss, kd_dlogits, kd_dtap, dproj = kd_term.compute(
                result, target_fn(x, idx))
            if kd_dlogits is not None:
                for s, g in enumerate(kd_dlogits):
                    if g is not None:
                        dlogits[s] = dlogits[s] + alpha * g
            if kd_dtap is not None:
                dtap = alpha * kd_dtap
            if dproj is not None:
                kd_term.projection = kd_term.projection - lr * (alpha * dproj)
        step_loss = combined_loss(task_loss, kd_loss, alpha) if kd_active else task_loss
        if not np.isfinite(step_loss):
            raise ContractError(f"training loss became non-finite ({step_loss})")
        grads = backward(spec, params, acts, dlogits, dtap)
        params = sgd_step(params, grads, lr)
        losses.append(step_loss)
    return params, float(np.mean(losses)) if losses else 0.0


def _eval_top1(spec, params, dataset) -> float:
    result, _ = forward_cached(spec, params, dataset.features)
    correct = 0
    for s, logits in enumerate(result.logits_per_slot):
        correct += int((logits.argmax(axis=1) == dataset.labels[:, s]).sum())
    return correct / (len(dataset) * spec.num_slots)


def _check_dataset(dataset: Dataset, spec: ModelSpec, cfg: TrainConfig):
    if len(dataset) == 0:
        raise ContractError("dataset is empty")
    if dataset.input_dim != spec.input_dim:
        raise DimensionError(f"dataset width {dataset.input_dim} vs spec input_dim "
                             f"{spec.input_dim}")
    if dataset.num_slots != spec.num_slots:
        raise DimensionError(f"dataset has {dataset.num_slots} label slots, spec has "
                             f"{spec.num_slots}")
    if cfg.batch_size > len(dataset):
        raise ContractError(f"batch_size {cfg.batch_size} exceeds dataset size "
                            f"{len(dataset)}")


def train_supervised(spec: ModelSpec, dataset: Dataset, train_cfg: TrainConfig,
                     rng: Rng, holdout: Dataset | None = None):
    """Minibatch SGD on cross-entropy summed over slots.

    Returns (model, history) where history has one record per epoch with the
    mean train loss and, when a holdout is given, its top-1 accuracy averaged
    over slots.
    """
    _check_dataset(dataset, spec, train_cfg)
    base = rng.child(train_cfg.stream)
    shuffle_rng = base.child("shuffle")
    params = init_model(spec, base.child("init")).param_list()
    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        params, loss = _train_epoch(spec, params, dataset, train_cfg.batch_size,
                                    train_cfg.lr, shuffle_rng)
        rec = {"epoch": epoch, "train_loss": loss}
        if holdout is not None:
            rec["holdout_top1"] = _eval_top1(spec, params, holdout)
        history.append(rec)
    return Model(spec, tuple(params)), history


def _teacher_target_fn(teacher: Model, kd_cfg: KDConfig):
    """Evaluate the frozen teacher on each minibatch (inference mode)."""
    def target(x, _idx):
        result, _ = forward_cached(teacher.spec, teacher.params, x)
        probs = None
        if kd_cfg.knowledge == "response":
            probs = [softmax_t(l, kd_cfg.temperature) for l in result.logits_per_slot]
        return probs, result.tap_features
    return target


def distill_offline(teacher: Model, student_spec: ModelSpec, dataset: Dataset,
                    kd_cfg: KDConfig, train_cfg: TrainConfig, rng: Rng) -> Model:
    """Train a student against a frozen, pretrained teacher.

    The teacher is only ever run forward; with alpha == 0 the run reduces
    bit-for-bit to train_supervised with the same rng.
    """
    if (teacher.spec.num_slots, teacher.spec.num_beams) != \
            (student_spec.num_slots, student_spec.num_beams):
        raise ConfigError(
            f"teacher predicts {teacher.spec.num_slots} slots x "
            f"{teacher.spec.num_beams} beams, student "
            f"{student_spec.num_slots} x {student_spec.num_beams}", "student_spec")
    _check_dataset(dataset, student_spec, train_cfg)
    base = rng.child(train_cfg.stream)
    shuffle_rng = base.child("shuffle")
    params = init_model(student_spec, base.child("init")).param_list()
    kd_active = kd_cfg.knowledge != "none" and kd_cfg.alpha > 0.0
    kd_term = None
    target_fn = None
    if kd_active:
        kd_term = _KDTerm(student_spec, kd_cfg, teacher.spec.tap_dim,
                          base.child("projection"))
        target_fn = _teacher_target_fn(teacher, kd_cfg)
    for _epoch in range(train_cfg.epochs):
        params, _ = _train_epoch(
            spec=student_spec, params=params, dataset=dataset,
            batch_size=train_cfg.batch_size, lr=train_cfg.lr,
            shuffle_rng=shuffle_rng, kd_term=kd_term, target_fn=target_fn,
            alpha=kd_cfg.alpha)
    return Model(student_spec, tuple(params))


def self_distill(spec: ModelSpec, dataset: Dataset, kd_cfg: KDConfig,
                 train_cfg: TrainConfig, rng: Rng) -> Model:
    """Distill a model from its own earlier snapshots.

    The first snapshot cadence worth of epochs runs plain supervised; after
    that, the parameters frozen self_kd_snapshot_every epochs earlier act as
    the teacher, refreshed on the same cadence.
    """
    _check_dataset(dataset, spec, train_cfg)
    base = rng.child(train_cfg.stream)
    shuffle_rng = base.child("shuffle")
    params = init_model(spec, base.child("init")).param_list()
    cadence = train_cfg.self_kd_snapshot_every
    kd_active = kd_cfg.knowledge != "none" and kd_cfg.alpha > 0.0
    snapshot: Model | None = None
    kd_term = None
    if kd_active:
        kd_term = _KDTerm(spec, kd_cfg, spec.tap_dim, base.child("projection"))
    for epoch in range(1, train_cfg.epochs + 1):
        if kd_active and epoch > cadence and (epoch - 1) % cadence == 0:
            snapshot = Model(spec, tuple(np.array(p) for p in params))
        use_kd = kd_active and snapshot is not None
        params, _ = _train_epoch(
            spec=spec, params=params, dataset=dataset,
            batch_size=train_cfg.batch_size, lr=train_cfg.lr,
            shuffle_rng=shuffle_rng,
            kd_term=kd_term if use_kd else None,
            target_fn=_teacher_target_fn(snapshot, kd_cfg) if use_kd else None,
            alpha=kd_cfg.alpha)
    return Model(spec, tuple(params))


def mutual_learn(specs, datasets, kd_cfg: KDConfig, train_cfg: TrainConfig,
                 rng: Rng):
    """Synchronous mutual learning: peers co-train in lockstep rounds.

    Each round every peer takes one local epoch whose distillation target is
    the average of the other peers' softened output distributions, with all
    peers evaluated frozen at the round start. Peers draw from identically
    derived streams, so identical peers with identical data stay identical.
    """
    if len(specs) < 2:
        raise ConfigError(f"mutual learning needs >= 2 peers, got {len(specs)}",
                          "specs")
    if len(datasets) != len(specs):
        raise ConfigError(f"{len(specs)} specs vs {len(datasets)} datasets", "datasets")
    slots_beams = {(s.num_slots, s.num_beams) for s in specs}
    if len(slots_beams) != 1:
        raise ConfigError("peers must share num_slots and num_beams", "specs")
    if kd_cfg.knowledge not in ("response", "none"):
        raise ConfigError("mutual learning exchanges softened outputs; knowledge "
                          f"must be 'response', got {kd_cfg.knowledge!r}", "knowledge")
    base = rng.child(train_cfg.stream)
    peers = []
    for spec, ds in zip(specs, datasets):
        _check_dataset(ds, spec, train_cfg)
        peers.append({
            "spec": spec,
            "params": init_model(spec, base.child("init")).param_list(),
            "shuffle": base.child("shuffle"),
            "kd_term": _KDTerm(spec, kd_cfg, None, base.child("projection")),
        })
    kd_active = kd_cfg.knowledge == "response" and kd_cfg.alpha > 0.0
    num_slots = specs[0].num_slots
    for _round in range(train_cfg.epochs):
        frozen = [Model(p["spec"], tuple(np.array(t) for t in p["params"]))
                  for p in peers]
        for i, peer in enumerate(peers):
            others = [frozen[j] for j in range(len(peers)) if j != i]

            def target(x, _idx, _others=others):
                acc = [np.zeros((x.shape[0], specs[0].num_beams))
                       for _ in range(num_slots)]
                for om in _others:
                    res, _ = forward_cached(om.spec, om.params, x)
                    for s in range(num_slots):
                        acc[s] += softmax_t(res.logits_per_slot[s],
                                            kd_cfg.temperature)
                return [a / len(_others) for a in acc], None

            peer["params"], _ = _train_epoch(
                spec=peer["spec"], params=peer["params"], dataset=datasets[i],
                batch_size=train_cfg.batch_size, lr=train_cfg.lr,
                shuffle_rng=peer["shuffle"],
                kd_term=peer["kd_term"] if kd_active else None,
                target_fn=target if kd_active else None,
                alpha=kd_cfg.alpha)
    return [Model(p["spec"], tuple(p["params"])) for p in peers]


@dataclass(frozen=True)
class RehearsalSet:
    """Server samples shipped alongside a student for edge fine-tuning,
    with the teacher's logits cached so the teacher itself stays home."""

    features: np.ndarray           # (n, input_dim)
    labels: np.ndarray             # (n, num_slots)
    teacher_logits: tuple[np.ndarray, ...]  # per slot, (n, num_beams)

    def __len__(self) -> int:
        return self.features.shape[0]


def finetune_rehearsal(student: Model, dataset: Dataset, rehearsal: RehearsalSet | None,
                       kd_cfg: KDConfig, train_cfg: TrainConfig, rng: Rng) -> Model:
    """Fine-tune a deployed student on local data.

    Per step the loss is (1 - alpha) * CE(local batch) + alpha * response-KD
    of the student against the cached teacher logits on a rehearsal batch.
    With no rehearsal samples the distillation term is zero and only the
    scaled task term remains.
    """
    _check_dataset(dataset, student.spec, train_cfg)
    spec = student.spec
    base = rng.child(train_cfg.stream)
    shuffle_rng = base.child("shuffle")
    reh_rng = base.child("rehearsal")
    params = student.param_list()
    alpha = kd_cfg.alpha
    weights = _resolve_horizon_weights(kd_cfg, spec.num_slots)
    reh_probs = None
    if rehearsal is not None and len(rehearsal) > 0 and alpha > 0.0:
        reh_probs = [softmax_t(l, kd_cfg.temperature)
                     for l in rehearsal.teacher_logits]
    for _epoch in range(train_cfg.epochs):
        reh_order = reh_rng.permutation(len(rehearsal)) if reh_probs is not None else None
        reh_pos = 0
        for idx in _batches(len(dataset), train_cfg.batch_size, shuffle_rng):
            result, acts = forward_cached(spec, params, dataset.features[idx])
            task_loss, dlogits = _task_grads(result, dataset.labels[idx], 1.0 - alpha)
            grads = backward(spec, params, acts, dlogits)
            if reh_probs is not None:
                take = min(train_cfg.batch_size, len(rehearsal))
                if reh_pos + take > len(rehearsal):
                    reh_order = reh_rng.permutation(len(rehearsal))
                    reh_pos = 0
                ridx = reh_order[reh_pos:reh_pos + take]
                reh_pos += take
                r_result, r_acts = forward_cached(spec, params,
                                                  rehearsal.features[ridx])
                _, kd_dlogits = _response_grad_from_probs(
                    r_result.logits_per_slot, [p[ridx] for p in reh_probs],
                    kd_cfg.temperature, weights)
                kd_grads = backward(spec, params, r_acts,
                                    [alpha * g if g is not None else None
                                     for g in kd_dlogits])
                grads = [g + kg for g, kg in zip(grads, kd_grads)]
            params = sgd_step(params, grads, train_cfg.lr)
    return Model(spec, tuple(params))
