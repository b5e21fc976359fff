"""Distillation topologies as deterministic protocols over a server and edge
nodes, with an event-sourced ledger of transfers and compute.

Cost conventions, fixed so ledgers are reproducible from specs alone:
a training step costs 3x the forward FLOPs per sample (forward plus a
2x backward), a frozen teacher consulted during distillation costs its
forward FLOPs per sample per epoch, transfers cost the exact serialized
payload length, and dataset/rehearsal payloads travel as float32 features,
uint16 labels, and float32 cached logits. Metric evaluations of the deployed
student on its node holdout are logged as inference; accuracy measurements on
other sets are the simulator's own bookkeeping and cost nothing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .distillation import (
    KDConfig,
    RehearsalSet,
    TrainConfig,
    distill_offline,
    finetune_rehearsal,
    train_supervised,
)
from .errors import ConfigError, ContractError
from .metrics import evaluate_topk
from .models import Model, ModelSpec, count_flops, forward, serialize
from .numerics import Rng
from .scenario import Scenario

TOPOLOGIES = ("centralized", "decentralized", "semi_centralized")

BYTES_PER_FEATURE = 4
BYTES_PER_LABEL = 2
BYTES_PER_LOGIT = 4
TRAIN_STEP_FLOP_FACTOR = 3  # forward + 2x backward

LEDGER_COLUMNS = ("step", "kind", "from", "to", "bytes", "flops", "phase", "label")


@dataclass(frozen=True)
class LedgerEvent:
    step: int
    kind: str          # transfer | compute | select
    from_party: str
    to_party: str
    bytes: int
    flops: int
    phase: str         # train | inference
    label: str


class CostLedger:
    """Append-only event log; all totals are folds over the events."""

    def __init__(self):
        self.events: list[LedgerEvent] = []

    def _append(self, **kw) -> LedgerEvent:
        ev = LedgerEvent(step=len(self.events), **kw)
        self.events.append(ev)
        return ev

    def transfer(self, src: str, dst: str, nbytes: int, phase: str, label: str):
        return self._append(kind="transfer", from_party=src, to_party=dst,
                            bytes=int(nbytes), flops=0, phase=phase, label=label)

    def compute(self, party: str, flops: int, phase: str, label: str):
        return self._append(kind="compute", from_party=party, to_party=party,
                            bytes=0, flops=int(flops), phase=phase, label=label)

    def select(self, party: str, label: str):
        return self._append(kind="select", from_party=party, to_party=party,
                            bytes=0, flops=0, phase="inference", label=label)


def ledger_summary(ledger: CostLedger) -> dict:
    """Exact fold of the event log into per-party, per-phase totals."""
    by_party: dict[str, dict] = {}

    def bucket(party: str) -> dict:
        return by_party.setdefault(party, {
            "train_flops": 0, "inference_flops": 0, "bytes_in": 0, "bytes_out": 0})

    bytes_total = 0
    flops_total = 0
    for ev in ledger.events:
        if ev.kind == "transfer":
            bytes_total += ev.bytes
            bucket(ev.from_party)["bytes_out"] += ev.bytes
            bucket(ev.to_party)["bytes_in"] += ev.bytes
        elif ev.kind == "compute":
            flops_total += ev.flops
            key = "train_flops" if ev.phase == "train" else "inference_flops"
            bucket(ev.from_party)[key] += ev.flops
    edge = [p for p in by_party if p.startswith("node")]
    return {
        "bytes_total": bytes_total,
        "flops_total": flops_total,
        "by_party": by_party,
        "server_train_flops": by_party.get("server", {}).get("train_flops", 0),
        "edge_train_flops": sum(by_party[p]["train_flops"] for p in edge),
        "edge_infer_flops": sum(by_party[p]["inference_flops"] for p in edge),
    }


def write_ledger_csv(ledger: CostLedger, path, label_prefix: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for ev in ledger.events:
            w.writerow([ev.step, ev.kind, ev.from_party, ev.to_party, ev.bytes,
                        ev.flops, ev.phase, label_prefix + ev.label])


# ---------------------------------------------------------------------------
# Parties and runtime student selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionRule:
    """Pick ``model_id`` when every (key, value) pair matches the context."""

    when: dict
    model_id: str


@dataclass
class Party:
    id: str
    registry: dict[str, Model] = field(default_factory=dict)
    dataset: Dataset | None = None
    context: dict = field(default_factory=dict)
    rules: list[SelectionRule] = field(default_factory=list)
    default_model_id: str | None = None


def select_student(party: Party, context: dict, ledger: CostLedger | None = None) -> str:
    """Deterministic runtime model choice; at most one model runs at inference.

    Rules are checked in declaration order; an unmatched context falls back to
    the declared default (or the sole registered model) and is flagged as a
    fallback in the logged zero-cost event.
    """
    if not party.registry:
        raise ContractError(f"party {party.id} has an empty model registry")
    chosen = None
    for rule in party.rules:
        if all(context.get(k) == v for k, v in rule.when.items()):
            if rule.model_id not in party.registry:
                raise ContractError(
                    f"selection rule names unregistered model {rule.model_id!r}")
            chosen = rule.model_id
            break
    fallback = chosen is None
    if chosen is None:
        chosen = party.default_model_id
    if chosen is None and len(party.registry) == 1:
        chosen = next(iter(party.registry))
    if chosen is None:
        raise ContractError(f"party {party.id}: no rule matched and no default set")
    if chosen not in party.registry:
        raise ContractError(f"default model {chosen!r} is not registered")
    if ledger is not None:
        note = "fallback" if (fallback and (party.rules or context)) else "rule"
        ledger.select(party.id, f"select:{chosen}:{note}")
    return chosen


# ---------------------------------------------------------------------------
# Plans and outcomes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyPlan:
    topology: str
    teacher_spec: ModelSpec
    student_spec: ModelSpec
    kd_cfg: KDConfig
    teacher_train: TrainConfig
    student_train: TrainConfig
    scenario: Scenario
    seed: int
    finetune: TrainConfig | None = None
    rehearsal_fraction: float = 0.0
    upload_node_data: bool = False
    metric_ks: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}", "topology")
        semi = self.topology == "semi_centralized"
        if semi and self.finetune is None:
            raise ConfigError("semi_centralized plans need a finetune config",
                              "finetune")
        if not semi and (self.finetune is not None or self.rehearsal_fraction != 0.0):
            raise ConfigError("finetune/rehearsal fields are only valid for "
                              "semi_centralized plans", "finetune")
        if not 0.0 <= self.rehearsal_fraction <= 1.0:
            raise ConfigError(
                f"rehearsal_fraction must lie in [0, 1], got {self.rehearsal_fraction}",
                "rehearsal_fraction")


@dataclass(frozen=True)
class MetricRow:
    eval_set: str      # "node<k>" or "global"
    owner: str         # party owning the evaluated model
    model_id: str
    slot: int
    k: int
    accuracy: float


@dataclass(frozen=True)
class RunOutcome:
    topology: str
    teacher: Model
    students: tuple[Model, ...]
    parties: tuple[Party, ...]   # server first, then nodes
    ledger: CostLedger
    metrics: tuple[MetricRow, ...]


def _train_flops(spec: ModelSpec, samples: int, epochs: int) -> int:
    return epochs * samples * TRAIN_STEP_FLOP_FACTOR * count_flops(spec)


def _eval_flops(spec: ModelSpec, samples: int) -> int:
    return samples * count_flops(spec)


def dataset_payload_bytes(input_dim: int, num_slots: int, samples: int) -> int:
    return samples * (BYTES_PER_FEATURE * input_dim + BYTES_PER_LABEL * num_slots)


def rehearsal_payload_bytes(input_dim: int, num_slots: int, num_beams: int,
                            samples: int) -> int:
    return samples * (BYTES_PER_FEATURE * input_dim
                      + BYTES_PER_LABEL * num_slots
                      + BYTES_PER_LOGIT * num_slots * num_beams)


def _ensure_nonempty(ds: Dataset, what: str):
    if len(ds) == 0:
        raise ContractError(f"{what} is empty")


def _server_training_set(plan: TopologyPlan, ledger: CostLedger) -> Dataset:
    """Server-side data, optionally extended by uploaded node datasets."""
    scn = plan.scenario
    _ensure_nonempty(scn.server_set, "server dataset")
    if not plan.upload_node_data:
        return scn.server_set
    parts = [scn.server_set]
    for k, ds in enumerate(scn.per_node_sets):
        ledger.transfer(
            f"node{k}", "server",
            dataset_payload_bytes(ds.input_dim, ds.num_slots, len(ds)),
            phase="train", label=f"upload node{k} data")
        parts.append(ds)
    return Dataset.concat(parts)


def _train_teacher(plan: TopologyPlan, data: Dataset, ledger: CostLedger,
                   rng: Rng, cache: dict | None = None) -> Model:
    # memoized across runs sharing (scenario, seed, spec, budget): retraining
    # would reproduce the same parameters bit for bit, so only time is saved;
    # the ledger still charges each run for its own teacher training
    key = None
    if cache is not None:
        key = (id(plan.scenario), plan.seed, plan.teacher_spec,
               plan.teacher_train, plan.upload_node_data)
    if key is not None and key in cache:
        teacher = cache[key]
    else:
        teacher, _ = train_supervised(plan.teacher_spec, data, plan.teacher_train,
                                      rng.child("teacher"))
        if key is not None:
            cache[key] = teacher
    ledger.compute("server",
                   _train_flops(plan.teacher_spec, len(data),
                                plan.teacher_train.epochs),
                   phase="train", label="teacher train")
    return teacher


def _distill_cost(plan: TopologyPlan, samples: int) -> int:
    """Student training plus per-minibatch frozen-teacher forwards."""
    cost = _train_flops(plan.student_spec, samples, plan.student_train.epochs)
    if plan.kd_cfg.knowledge != "none" and plan.kd_cfg.alpha > 0.0:
        cost += plan.student_train.epochs * samples * count_flops(plan.teacher_spec)
    return cost


def _deploy_and_measure(plan: TopologyPlan, teacher: Model, parties: list[Party],
                        students: list[Model], ledger: CostLedger) -> list[MetricRow]:
    """Node-holdout inference through select_student, plus global measurements."""
    scn = plan.scenario
    rows: list[MetricRow] = []
    ks = plan.metric_ks
    for k_node, party in enumerate(parties[1:]):
        holdout = scn.node_holdouts[k_node]
        mid = select_student(party, party.context, ledger)
        model = party.registry[mid]
        ledger.compute(party.id, _eval_flops(model.spec, len(holdout)),
                       phase="inference", label=f"holdout inference:{mid}")
        for (slot, k), acc in evaluate_topk(model, holdout, ks).items():
            rows.append(MetricRow(f"node{k_node}", party.id, "student", slot, k, acc))
        for (slot, k), acc in evaluate_topk(teacher, holdout, ks).items():
            rows.append(MetricRow(f"node{k_node}", "server", "teacher", slot, k, acc))
    global_holdout = scn.holdout_set
    for (slot, k), acc in evaluate_topk(teacher, global_holdout, ks).items():
        rows.append(MetricRow("global", "server", "teacher", slot, k, acc))
    for k_node, model in enumerate(students):
        for (slot, k), acc in evaluate_topk(model, global_holdout, ks).items():
            rows.append(MetricRow("global", f"node{k_node}", "student", slot, k, acc))
    return rows


def _make_parties(plan: TopologyPlan) -> list[Party]:
    scn = plan.scenario
    parties = [Party("server", dataset=scn.server_set)]
    parties += [Party(f"node{k}", dataset=scn.per_node_sets[k])
                for k in range(scn.config.num_nodes)]
    return parties


def run_centralized(plan: TopologyPlan, cache: dict | None = None) -> RunOutcome:
    """Teacher and per-node students all trained at the server; only the
    lightweight students cross the fronthaul."""
    ledger = CostLedger()
    rng = Rng(plan.seed)
    parties = _make_parties(plan)
    server = parties[0]
    train_set = _server_training_set(plan, ledger)
    teacher = _train_teacher(plan, train_set, ledger, rng, cache)
    server.registry["teacher"] = teacher
    students = []
    for k in range(plan.scenario.config.num_nodes):
        student = distill_offline(teacher, plan.student_spec, train_set,
                                  plan.kd_cfg, plan.student_train,
                                  rng.child(f"node{k}/distill"))
        ledger.compute("server", _distill_cost(plan, len(train_set)),
                       phase="train", label=f"distill student for node{k}")
        payload = serialize(student)
        ledger.transfer("server", f"node{k}", len(payload), phase="train",
                        label=f"deploy student to node{k}")
        parties[k + 1].registry["student"] = student
        parties[k + 1].default_model_id = "student"
        students.append(student)
    rows = _deploy_and_measure(plan, teacher, parties, students, ledger)
    return RunOutcome("centralized", teacher, tuple(students), tuple(parties),
                      ledger, tuple(rows))


def run_decentralized(plan: TopologyPlan, cache: dict | None = None) -> RunOutcome:
    """Teacher trained at the server, shipped to each node, used for local
    distillation on node data, then deleted from the node registry."""
    ledger = CostLedger()
    rng = Rng(plan.seed)
    parties = _make_parties(plan)
    scn = plan.scenario
    _ensure_nonempty(scn.server_set, "server dataset")
    for k, ds in enumerate(scn.per_node_sets):
        if len(ds) == 0:
            raise ContractError(f"node{k} dataset is empty")
    teacher = _train_teacher(plan, scn.server_set, ledger, rng, cache)
    parties[0].registry["teacher"] = teacher
    teacher_payload = serialize(teacher)
    students = []
    for k in range(scn.config.num_nodes):
        node = parties[k + 1]
        ledger.transfer("server", node.id, len(teacher_payload), phase="train",
                        label=f"ship teacher to node{k}")
        node.registry["teacher"] = teacher
        local = scn.per_node_sets[k]
        student = distill_offline(teacher, plan.student_spec, local,
                                  plan.kd_cfg, plan.student_train,
                                  rng.child(f"node{k}/distill"))
        ledger.compute(node.id, _distill_cost(plan, len(local)),
                       phase="train", label=f"local distill at node{k}")
        del node.registry["teacher"]  # teachers are train-time only at the edge
        node.registry["student"] = student
        node.default_model_id = "student"
        students.append(student)
    rows = _deploy_and_measure(plan, teacher, parties, students, ledger)
    return RunOutcome("decentralized", teacher, tuple(students), tuple(parties),
                      ledger, tuple(rows))


def run_semi_centralized(plan: TopologyPlan, cache: dict | None = None) -> RunOutcome:
    """Server-trained students fine-tuned at the edge against local data plus
    a small rehearsal payload carrying cached teacher logits (never the
    teacher itself)."""
    ledger = CostLedger()
    rng = Rng(plan.seed)
    parties = _make_parties(plan)
    scn = plan.scenario
    train_set = _server_training_set(plan, ledger)
    if plan.rehearsal_fraction > 0.0:
        _ensure_nonempty(scn.server_set, "server dataset (rehearsal source)")
    teacher = _train_teacher(plan, train_set, ledger, rng, cache)
    parties[0].registry["teacher"] = teacher
    students = []
    for k in range(scn.config.num_nodes):
        node = parties[k + 1]
        local = scn.per_node_sets[k]
        if len(local) == 0:
            raise ContractError(f"node{k} dataset is empty")
        student = distill_offline(teacher, plan.student_spec, train_set,
                                  plan.kd_cfg, plan.student_train,
                                  rng.child(f"node{k}/distill"))
        ledger.compute("server", _distill_cost(plan, len(train_set)),
                       phase="train", label=f"distill student for node{k}")
        payload = serialize(student)
        ledger.transfer("server", node.id, len(payload), phase="train",
                        label=f"deploy student to node{k}")
        n_reh = math.ceil(plan.rehearsal_fraction * len(local))
        rehearsal = None
        if n_reh > 0:
            pick = rng.child(f"node{k}/rehearsal").permutation(
                len(scn.server_set))[:n_reh]
            feats = scn.server_set.features[pick]
            labs = scn.server_set.labels[pick]
            t_logits = forward(teacher, feats).logits_per_slot
            ledger.compute("server", _eval_flops(teacher.spec, n_reh),
                           phase="train", label=f"cache teacher logits node{k}")
            rehearsal = RehearsalSet(feats, labs, t_logits)
            ledger.transfer(
                "server", node.id,
                rehearsal_payload_bytes(feats.shape[1], labs.shape[1],
                                        plan.student_spec.num_beams, n_reh),
                phase="train", label=f"rehearsal payload to node{k}")
        if plan.finetune.epochs > 0:
            student = finetune_rehearsal(student, local, rehearsal, plan.kd_cfg,
                                         plan.finetune, rng.child(f"node{k}/finetune"))
            steps = plan.finetune.epochs * math.ceil(
                len(local) / plan.finetune.batch_size)
            flops = _train_flops(plan.student_spec, len(local), plan.finetune.epochs)
            if rehearsal is not None and plan.kd_cfg.alpha > 0.0:
                reh_batch = min(plan.finetune.batch_size, n_reh)
                flops += steps * reh_batch * TRAIN_STEP_FLOP_FACTOR * \
                    count_flops(plan.student_spec)
            ledger.compute(node.id, flops, phase="train",
                           label=f"finetune at node{k}")
        node.registry["student"] = student
        node.default_model_id = "student"
        students.append(student)
    rows = _deploy_and_measure(plan, teacher, parties, students, ledger)
    return RunOutcome("semi_centralized", teacher, tuple(students), tuple(parties),
                      ledger, tuple(rows))


_RUNNERS = {
    "centralized": run_centralized,
    "decentralized": run_decentralized,
    "semi_centralized": run_semi_centralized,
}


def run_topology(plan: TopologyPlan, cache: dict | None = None) -> RunOutcome:
    return _RUNNERS[plan.topology](plan, cache)
