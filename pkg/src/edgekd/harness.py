"""Experiment runner: strict config parsing, metric tables, CSV reports.

Model identifiers in reports are ``<plan_id>:<role>`` where the role is one
of teacher, teacher_self_kd, student_<knowledge>, or student_plain (the
identically budgeted non-distilled baseline). Rows with node == "global" hold
each model's accuracy on the union holdout (averaged over node instances for
per-node students) and are the rows the seed-aggregated summary is built
from, so every summary number joins 1:1 to a metrics row per seed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .distillation import KDConfig, TrainConfig, finetune_rehearsal, self_distill, train_supervised
from .errors import ConfigError, EdgeKdError
from .metrics import evaluate_topk, improvement
from .models import Model, ModelSpec, count_flops, count_params, save_model, serialized_len
from .numerics import Rng
from .orchestrator import RunOutcome, TopologyPlan, run_topology, write_ledger_csv
from .scenario import ModalityConfig, Scenario, ScenarioConfig, TrajectoryConfig, generate_scenario

METRICS_COLUMNS = ("seed", "topology", "node", "model_id", "slot", "k", "accuracy")
SUMMARY_COLUMNS = ("topology", "model_id", "slot", "k", "mean", "std",
                   "improvement_vs_baseline")
FIG_COLUMNS = ("modality_set", "model_id", "slot", "k", "accuracy")
MODELS_COLUMNS = ("model_id", "param_count", "flops", "bytes")

ROLE_TEACHER = "teacher"
ROLE_TEACHER_SELF_KD = "teacher_self_kd"
ROLE_BASELINE = "student_plain"

FIG_ROLES = (ROLE_TEACHER, ROLE_TEACHER_SELF_KD, "student_response",
             "student_relation", ROLE_BASELINE)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanConfig:
    plan_id: str
    topology: str
    teacher: ModelSpec
    student: ModelSpec
    kd: KDConfig
    teacher_train: TrainConfig
    student_train: TrainConfig
    finetune: TrainConfig | None = None
    rehearsal_fraction: float = 0.0
    include_self_kd_teacher: bool = False
    self_kd: KDConfig | None = None
    include_baseline: bool = True
    upload_node_data: bool = False
    modalities: tuple[str, ...] | None = None

    @property
    def student_role(self) -> str:
        return f"student_{self.kd.knowledge}"

    def model_id(self, role: str) -> str:
        return f"{self.plan_id}:{role}"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    plans: tuple[PlanConfig, ...]
    metric_ks: tuple[int, ...]
    seeds: tuple[int, ...]
    baseline_model_id: str = ROLE_BASELINE
    output_dir: str = "out"
    workers: int = 1
    emit_fig3: bool = False

    def __post_init__(self):
        if not self.metric_ks:
            raise ConfigError("metric_ks must be nonempty", "metric_ks")
        if any(k < 1 for k in self.metric_ks):
            raise ConfigError(f"metric_ks entries must be >= 1, got {self.metric_ks}",
                              "metric_ks")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty", "seeds")
        if len({p.plan_id for p in self.plans}) != len(self.plans):
            raise ConfigError("plan_id values must be unique", "plans")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", "workers")


def _require_keys(d: dict, known: dict, path: str) -> dict:
    """Strict field extraction: unknown keys are errors, not typos."""
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must be an object, got {type(d).__name__}", path)
    for key in d:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in {path}", f"{path}.{key}")
    out = {}
    for key, default in known.items():
        out[key] = d.get(key, default)
    return out


_MISSING = object()


def _need(value, path: str):
    if value is _MISSING:
        raise ConfigError(f"missing required field {path}", path)
    return value


def _parse_modality(d: dict, path: str) -> ModalityConfig:
    f = _require_keys(d, {"dim": _MISSING, "noise_std": _MISSING}, path)
    return ModalityConfig(dim=_need(f["dim"], f"{path}.dim"),
                          noise_std=_need(f["noise_std"], f"{path}.noise_std"))


def _parse_trajectory(d: dict, path: str) -> TrajectoryConfig:
    defaults = TrajectoryConfig()
    f = _require_keys(d, {"drift": defaults.drift, "step_std": defaults.step_std,
                          "drift_jitter": defaults.drift_jitter,
                          "drift_unit": defaults.drift_unit}, path)
    return TrajectoryConfig(**f)


def parse_scenario_config(d: dict, path: str = "scenario") -> ScenarioConfig:
    defaults = ScenarioConfig()
    f = _require_keys(d, {
        "num_beams": defaults.num_beams, "num_slots": defaults.num_slots,
        "history_len": defaults.history_len, "modalities": None,
        "num_nodes": defaults.num_nodes,
        "samples_per_node": defaults.samples_per_node,
        "samples_server": defaults.samples_server,
        "samples_holdout": defaults.samples_holdout,
        "heterogeneity": defaults.heterogeneity, "staleness": defaults.staleness,
        "trajectory": None,
    }, path)
    kwargs = dict(f)
    if f["modalities"] is None:
        kwargs["modalities"] = defaults.modalities
    else:
        kwargs["modalities"] = {
            name: _parse_modality(m, f"{path}.modalities.{name}")
            for name, m in f["modalities"].items()}
    kwargs["trajectory"] = (defaults.trajectory if f["trajectory"] is None
                            else _parse_trajectory(f["trajectory"], f"{path}.trajectory"))
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{path}.{exc.field}") from exc


def _parse_model_spec(d: dict, scenario: ScenarioConfig, path: str) -> ModelSpec:
    f = _require_keys(d, {"trunk_dims": _MISSING, "input_dim": None,
                          "num_slots": None, "num_beams": None,
                          "feature_tap": -1}, path)
    trunk = tuple(_need(f["trunk_dims"], f"{path}.trunk_dims"))
    return ModelSpec(
        input_dim=f["input_dim"] if f["input_dim"] is not None else scenario.input_dim,
        trunk_dims=trunk,
        num_slots=f["num_slots"] if f["num_slots"] is not None else scenario.num_slots,
        num_beams=f["num_beams"] if f["num_beams"] is not None else scenario.num_beams,
        feature_tap=f["feature_tap"])


def _parse_kd(d: dict, path: str) -> KDConfig:
    defaults = KDConfig()
    f = _require_keys(d, {
        "knowledge": defaults.knowledge, "temperature": defaults.temperature,
        "alpha": defaults.alpha, "horizon_weights": None,
        "feature_projection": defaults.feature_projection,
        "relation_normalize": defaults.relation_normalize}, path)
    if f["horizon_weights"] is not None:
        f["horizon_weights"] = tuple(f["horizon_weights"])
    try:
        return KDConfig(**f)
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{path}.{exc.field}") from exc


def _parse_train(d: dict, path: str) -> TrainConfig:
    f = _require_keys(d, {"epochs": _MISSING, "batch_size": _MISSING,
                          "lr": _MISSING, "stream": "train",
                          "self_kd_snapshot_every": 1}, path)
    try:
        return TrainConfig(epochs=_need(f["epochs"], f"{path}.epochs"),
                           batch_size=_need(f["batch_size"], f"{path}.batch_size"),
                           lr=_need(f["lr"], f"{path}.lr"),
                           stream=f["stream"],
                           self_kd_snapshot_every=f["self_kd_snapshot_every"])
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{path}.{exc.field}") from exc


def _scenario_for_plan(base: ScenarioConfig, plan_modalities) -> ScenarioConfig:
    if plan_modalities is None:
        return base
    missing = [m for m in plan_modalities if m not in base.modalities]
    if missing:
        raise ConfigError(f"plan modalities {missing} not present in scenario",
                          "plans.modalities")
    kept = {name: base.modalities[name] for name in base.modalities
            if name in plan_modalities}
    cfg = base.to_dict()
    cfg["modalities"] = kept
    return ScenarioConfig.from_dict(cfg)


def _parse_plan(d: dict, scenario: ScenarioConfig, idx: int) -> PlanConfig:
    path = f"plans[{idx}]"
    f = _require_keys(d, {
        "plan_id": _MISSING, "topology": _MISSING, "teacher": _MISSING,
        "student": _MISSING, "kd": _MISSING, "teacher_train": _MISSING,
        "student_train": _MISSING, "finetune": None, "rehearsal_fraction": 0.0,
        "include_self_kd_teacher": False, "self_kd": None,
        "include_baseline": True, "upload_node_data": False,
        "modalities": None}, path)
    modalities = tuple(f["modalities"]) if f["modalities"] is not None else None
    plan_scenario = _scenario_for_plan(scenario, modalities)
    return PlanConfig(
        plan_id=_need(f["plan_id"], f"{path}.plan_id"),
        topology=_need(f["topology"], f"{path}.topology"),
        teacher=_parse_model_spec(_need(f["teacher"], f"{path}.teacher"),
                                  plan_scenario, f"{path}.teacher"),
        student=_parse_model_spec(_need(f["student"], f"{path}.student"),
                                  plan_scenario, f"{path}.student"),
        kd=_parse_kd(_need(f["kd"], f"{path}.kd"), f"{path}.kd"),
        teacher_train=_parse_train(_need(f["teacher_train"], f"{path}.teacher_train"),
                                   f"{path}.teacher_train"),
        student_train=_parse_train(_need(f["student_train"], f"{path}.student_train"),
                                   f"{path}.student_train"),
        finetune=None if f["finetune"] is None
        else _parse_train(f["finetune"], f"{path}.finetune"),
        rehearsal_fraction=f["rehearsal_fraction"],
        include_self_kd_teacher=f["include_self_kd_teacher"],
        self_kd=None if f["self_kd"] is None
        else _parse_kd(f["self_kd"], f"{path}.self_kd"),
        include_baseline=f["include_baseline"],
        upload_node_data=f["upload_node_data"],
        modalities=modalities)


def parse_experiment_config(d: dict) -> ExperimentConfig:
    f = _require_keys(d, {
        "scenario": _MISSING, "plans": _MISSING, "metric_ks": _MISSING,
        "seeds": _MISSING, "baseline_model_id": ROLE_BASELINE,
        "output_dir": "out", "workers": 1, "emit_fig3": False}, "config")
    scenario = parse_scenario_config(_need(f["scenario"], "scenario"))
    plans_raw = _need(f["plans"], "plans")
    if not isinstance(plans_raw, list) or not plans_raw:
        raise ConfigError("plans must be a nonempty list", "plans")
    plans = tuple(_parse_plan(p, scenario, i) for i, p in enumerate(plans_raw))
    return ExperimentConfig(
        scenario=scenario, plans=plans,
        metric_ks=tuple(_need(f["metric_ks"], "metric_ks")),
        seeds=tuple(_need(f["seeds"], "seeds")),
        baseline_model_id=f["baseline_model_id"],
        output_dir=f["output_dir"], workers=f["workers"],
        emit_fig3=f["emit_fig3"])


def load_experiment_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} at line {exc.lineno} "
                          f"column {exc.colno}", "json") from exc
    return parse_experiment_config(raw)


def config_echo_dict(config: ExperimentConfig) -> dict:
    """Fully resolved configuration, ready to be re-serialized."""
    def kd_dict(kd: KDConfig) -> dict:
        return {"knowledge": kd.knowledge, "temperature": kd.temperature,
                "alpha": kd.alpha,
                "horizon_weights": list(kd.horizon_weights) if kd.horizon_weights else None,
                "feature_projection": kd.feature_projection,
                "relation_normalize": kd.relation_normalize}

    def train_dict(tc: TrainConfig | None):
        if tc is None:
            return None
        return {"epochs": tc.epochs, "batch_size": tc.batch_size, "lr": tc.lr,
                "stream": tc.stream,
                "self_kd_snapshot_every": tc.self_kd_snapshot_every}

    def spec_dict(s: ModelSpec) -> dict:
        return {"input_dim": s.input_dim, "trunk_dims": list(s.trunk_dims),
                "num_slots": s.num_slots, "num_beams": s.num_beams,
                "feature_tap": s.feature_tap}

    return {
        "scenario": config.scenario.to_dict(),
        "plans": [{
            "plan_id": p.plan_id, "topology": p.topology,
            "teacher": spec_dict(p.teacher), "student": spec_dict(p.student),
            "kd": kd_dict(p.kd), "teacher_train": train_dict(p.teacher_train),
            "student_train": train_dict(p.student_train),
            "finetune": train_dict(p.finetune),
            "rehearsal_fraction": p.rehearsal_fraction,
            "include_self_kd_teacher": p.include_self_kd_teacher,
            "self_kd": kd_dict(p.self_kd) if p.self_kd else None,
            "include_baseline": p.include_baseline,
            "upload_node_data": p.upload_node_data,
            "modalities": list(p.modalities) if p.modalities else None,
        } for p in config.plans],
        "metric_ks": list(config.metric_ks),
        "seeds": list(config.seeds),
        "baseline_model_id": config.baseline_model_id,
        "output_dir": config.output_dir,
        "workers": config.workers,
        "emit_fig3": config.emit_fig3,
    }


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    plan: PlanConfig
    seed: int
    outcome: RunOutcome
    rows: list[dict] = field(default_factory=list)  # metrics schema dicts


def _mirror_baseline(plan: PlanConfig, scenario: Scenario, node: int,
                     seed: int, cache: dict | None = None) -> Model:
    """Non-distilled student with the distilled student's exact budget and
    streams: same data, epochs, batch size, lr, init, and shuffles."""
    key = (id(scenario), seed, node, plan.topology, plan.student,
           plan.student_train, plan.finetune)
    if cache is not None and key in cache:
        return cache[key]
    rng = Rng(seed)
    if plan.topology == "decentralized":
        data = scenario.per_node_sets[node]
    else:
        data = scenario.server_set
    model, _ = train_supervised(plan.student, data, plan.student_train,
                                rng.child(f"node{node}/distill"))
    if plan.topology == "semi_centralized" and plan.finetune is not None \
            and plan.finetune.epochs > 0:
        plain = KDConfig(knowledge="none", alpha=0.0)
        model = finetune_rehearsal(model, scenario.per_node_sets[node], None,
                                   plain, plan.finetune,
                                   rng.child(f"node{node}/finetune"))
    if cache is not None:
        cache[key] = model
    return model


def _self_kd_teacher(plan: PlanConfig, scenario: Scenario, seed: int) -> Model:
    kd = plan.self_kd if plan.self_kd is not None else KDConfig(
        knowledge="response", temperature=plan.kd.temperature, alpha=0.3)
    return self_distill(plan.teacher, scenario.server_set, kd,
                        plan.teacher_train, Rng(seed).child("teacher_selfkd"))


def run_cell(config: ExperimentConfig, plan: PlanConfig, seed: int,
             scenario: Scenario, cache: dict | None = None) -> CellResult:
    """Execute one (plan, seed) cell and compute its metric rows.

    ``cache`` memoizes teachers and baselines across cells that would train
    bit-identical models (same scenario, seed, spec, and budget).
    """
    topo_plan = TopologyPlan(
        topology=plan.topology, teacher_spec=plan.teacher,
        student_spec=plan.student, kd_cfg=plan.kd,
        teacher_train=plan.teacher_train, student_train=plan.student_train,
        scenario=scenario, seed=seed, finetune=plan.finetune,
        rehearsal_fraction=plan.rehearsal_fraction,
        upload_node_data=plan.upload_node_data, metric_ks=config.metric_ks)
    outcome = run_topology(topo_plan, cache)
    num_nodes = scenario.config.num_nodes

    models_by_role: dict[str, list[Model]] = {
        ROLE_TEACHER: [outcome.teacher],
        plan.student_role: list(outcome.students),
    }
    if plan.include_self_kd_teacher:
        models_by_role[ROLE_TEACHER_SELF_KD] = [_self_kd_teacher(plan, scenario, seed)]
    if plan.include_baseline:
        models_by_role[ROLE_BASELINE] = [
            _mirror_baseline(plan, scenario, k, seed, cache)
            for k in range(num_nodes)]

    role_order = [ROLE_TEACHER]
    if ROLE_TEACHER_SELF_KD in models_by_role:
        role_order.append(ROLE_TEACHER_SELF_KD)
    role_order.append(plan.student_role)
    if ROLE_BASELINE in models_by_role:
        role_order.append(ROLE_BASELINE)

    result = CellResult(plan, seed, outcome)
    global_holdout = scenario.holdout_set

    def add_row(node: str, role: str, slot: int, k: int, acc: float):
        result.rows.append({
            "seed": seed, "topology": plan.topology, "node": node,
            "model_id": plan.model_id(role), "slot": slot, "k": k,
            "accuracy": float(acc)})

    for node in range(num_nodes):
        holdout = scenario.node_holdouts[node]
        for role in role_order:
            instances = models_by_role[role]
            model = instances[node] if len(instances) > 1 else instances[0]
            for (slot, k), acc in evaluate_topk(model, holdout,
                                                config.metric_ks).items():
                add_row(str(node), role, slot, k, acc)
    for role in role_order:
        instances = models_by_role[role]
        per_inst = [evaluate_topk(m, global_holdout, config.metric_ks)
                    for m in instances]
        for (slot, k) in per_inst[0]:
            acc = float(np.mean([pi[(slot, k)] for pi in per_inst]))
            add_row("global", role, slot, k, acc)
    return result


# ---------------------------------------------------------------------------
# Aggregation and report files
# ---------------------------------------------------------------------------

def summarize(rows: list[dict], config: ExperimentConfig) -> list[dict]:
    """Seed-aggregated mean/std of the node == "global" rows, with the
    improvement against the same plan's baseline role in points."""
    by_key: dict[tuple, list[float]] = {}
    topo_of: dict[str, str] = {}
    for r in rows:
        if r["node"] != "global":
            continue
        key = (r["model_id"], r["slot"], r["k"])
        by_key.setdefault(key, []).append(r["accuracy"])
        topo_of[r["model_id"]] = r["topology"]
    means = {key: float(np.mean(v)) for key, v in by_key.items()}
    out = []
    for (model_id, slot, k), vals in by_key.items():
        plan_id = model_id.rsplit(":", 1)[0]
        base_key = (f"{plan_id}:{config.baseline_model_id}", slot, k)
        imp = ""
        if base_key in means:
            imp = improvement(min(1.0, means[(model_id, slot, k)]),
                              min(1.0, means[base_key]))
        out.append({"topology": topo_of[model_id], "model_id": model_id,
                    "slot": slot, "k": k, "mean": means[(model_id, slot, k)],
                    "std": float(np.std(vals)),
                    "improvement_vs_baseline": imp})
    return out


def emit_fig3_table(rows: list[dict], config: ExperimentConfig) -> list[dict]:
    """Grouped-bars table: one row per (modality set, model role, slot, k).

    Requires every role in FIG_ROLES within each modality set; values are the
    mean over seeds (and over plans sharing the modality set) of the global
    holdout rows.
    """
    modality_of = {}
    for p in config.plans:
        mods = p.modalities if p.modalities is not None \
            else tuple(config.scenario.enabled_modalities())
        modality_of[p.plan_id] = "+".join(mods)
    acc: dict[tuple, list[float]] = {}
    for r in rows:
        if r["node"] != "global":
            continue
        plan_id, role = r["model_id"].rsplit(":", 1)
        key = (modality_of[plan_id], role, r["slot"], r["k"])
        acc.setdefault(key, []).append(r["accuracy"])
    mod_sets = sorted({m for m in modality_of.values()})
    out = []
    for mod in mod_sets:
        for role in FIG_ROLES:
            present = [key for key in acc if key[0] == mod and key[1] == role]
            if not present:
                raise ConfigError(
                    f"modality set {mod!r} is missing model role {role!r}",
                    "emit_fig3")
        for role in FIG_ROLES:
            keys = sorted([key for key in acc if key[0] == mod and key[1] == role],
                          key=lambda t: (t[2], t[3]))
            for key in keys:
                out.append({"modality_set": mod, "model_id": role,
                            "slot": key[2], "k": key[3],
                            "accuracy": float(np.mean(acc[key]))})
    return out


def _write_csv(path: Path, columns, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] for c in columns])


def model_info_rows(config: ExperimentConfig) -> list[dict]:
    out = []
    for p in config.plans:
        roles = [(ROLE_TEACHER, p.teacher)]
        if p.include_self_kd_teacher:
            roles.append((ROLE_TEACHER_SELF_KD, p.teacher))
        roles.append((p.student_role, p.student))
        if p.include_baseline:
            roles.append((ROLE_BASELINE, p.student))
        for role, spec in roles:
            out.append({"model_id": p.model_id(role),
                        "param_count": count_params(spec),
                        "flops": count_flops(spec),
                        "bytes": serialized_len(spec)})
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[dict]
    summary: list[dict]
    cells: list[CellResult]
    out_dir: Path


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run every (plan, seed) cell and write the report files.

    Outputs are byte-identical for identical configs; cells may execute in
    parallel (``workers`` > 1) since results are merged in plan/seed order.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    scenarios: dict[tuple, Scenario] = {}
    for plan in config.plans:
        cfg = _scenario_for_plan(config.scenario, plan.modalities)
        for seed in config.seeds:
            key = (plan.modalities, seed)
            if key not in scenarios:
                scenarios[key] = generate_scenario(cfg, seed)

    cells_keys = [(pi, seed) for pi, _ in enumerate(config.plans)
                  for seed in config.seeds]
    cache: dict = {}

    def exec_cell(key):
        pi, seed = key
        plan = config.plans[pi]
        return run_cell(config, plan, seed, scenarios[(plan.modalities, seed)],
                        cache)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = dict(zip(cells_keys, pool.map(exec_cell, cells_keys)))
    else:
        results = {key: exec_cell(key) for key in cells_keys}

    rows: list[dict] = []
    ledger_rows: list[dict] = []
    for key in cells_keys:
        cell = results[key]
        rows.extend(cell.rows)
        prefix = f"{cell.plan.plan_id}/seed{cell.seed}/"
        for ev in cell.outcome.ledger.events:
            ledger_rows.append({"step": ev.step, "kind": ev.kind,
                                "from": ev.from_party, "to": ev.to_party,
                                "bytes": ev.bytes, "flops": ev.flops,
                                "phase": ev.phase, "label": prefix + ev.label})
        cell_dir = out / "runs" / cell.plan.plan_id / f"seed{cell.seed}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        for k, student in enumerate(cell.outcome.students):
            save_model(student, cell_dir / f"node{k}_student.mdl")
        write_ledger_csv(cell.outcome.ledger, cell_dir / "ledger.csv")
        _write_csv(cell_dir / "metrics.csv", METRICS_COLUMNS, cell.rows)

    summary = summarize(rows, config)
    _write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)
    _write_csv(out / "ledger.csv", ("step", "kind", "from", "to", "bytes",
                                    "flops", "phase", "label"), ledger_rows)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    _write_csv(out / "models.csv", MODELS_COLUMNS, model_info_rows(config))
    echo = config_echo_dict(config)
    echo["output_dir"] = str(out)
    (out / "config_echo.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if config.emit_fig3:
        _write_csv(out / "fig3.csv", FIG_COLUMNS, emit_fig3_table(rows, config))
    return ExperimentReport(config, rows, summary,
                            [results[k] for k in cells_keys], out)
