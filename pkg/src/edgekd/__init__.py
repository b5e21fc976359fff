"""Deterministic simulator for knowledge-distillation-based collaborative
learning between a server and heterogeneous edge nodes.

The package provides a seeded numeric core, multi-head dense classifiers with
size/FLOP accounting, response/feature/relation distillation losses with
offline, self-, and mutual training schemes, a synthetic multi-modal
beam-tracking data generator, three distillation topologies with an
event-sourced cost ledger, and an experiment harness with CSV reports.
"""

from .data import Dataset, Sample
from .distillation import (
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
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    EdgeKdError,
    FormatError,
    ParameterError,
)
from .harness import (
    ExperimentConfig,
    PlanConfig,
    emit_fig3_table,
    load_experiment_config,
    parse_experiment_config,
    run_experiment,
)
from .metrics import compression_summary, evaluate_topk, improvement, topk_accuracy
from .models import (
    ForwardResult,
    Model,
    ModelSpec,
    count_flops,
    count_params,
    deserialize,
    forward,
    init_model,
    load_model,
    save_model,
    serialize,
    serialized_len,
)
from .numerics import (
    Rng,
    cross_entropy,
    dense_forward,
    grad_check,
    kl_divergence,
    sgd_step,
    softmax_t,
)
from .orchestrator import (
    CostLedger,
    Party,
    RunOutcome,
    SelectionRule,
    TopologyPlan,
    ledger_summary,
    run_centralized,
    run_decentralized,
    run_semi_centralized,
    run_topology,
    select_student,
)
from .scenario import (
    Scenario,
    ScenarioConfig,
    TrajectoryConfig,
    beam_label,
    dump_scenario,
    generate_scenario,
    load_scenario,
    render_modalities,
    simulate_trajectory,
)

__version__ = "0.1.0"
