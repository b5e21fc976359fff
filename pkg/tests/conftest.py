import copy

TINY_EXPERIMENT = {
    "scenario": {
        "num_nodes": 2, "samples_per_node": 120, "samples_server": 240,
        "samples_holdout": 80, "num_beams": 8, "num_slots": 2, "history_len": 2,
        "modalities": {"img": {"dim": 6, "noise_std": 0.3},
                       "radar": {"dim": 4, "noise_std": 0.1}},
    },
    "plans": [{
        "plan_id": "dec_resp",
        "topology": "decentralized",
        "teacher": {"trunk_dims": [24]},
        "student": {"trunk_dims": [6]},
        "kd": {"knowledge": "response", "temperature": 3.0, "alpha": 0.6},
        "teacher_train": {"epochs": 2, "batch_size": 40, "lr": 0.15},
        "student_train": {"epochs": 2, "batch_size": 40, "lr": 0.15},
    }],
    "metric_ks": [1, 2],
    "seeds": [3, 4],
}


def tiny_experiment(**overrides):
    cfg = copy.deepcopy(TINY_EXPERIMENT)
    cfg.update(copy.deepcopy(overrides))
    return cfg
