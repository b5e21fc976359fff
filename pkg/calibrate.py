"""Scratch calibration for acceptance-scale experiments (not shipped)."""
import sys, time
import numpy as np
from edgekd.distillation import KDConfig, TrainConfig, distill_offline, train_supervised
from edgekd.metrics import evaluate_topk
from edgekd.models import ModelSpec, count_params
from edgekd.numerics import Rng
from edgekd.scenario import ModalityConfig, ScenarioConfig, TrajectoryConfig, generate_scenario

sigma_img = float(sys.argv[1]) if len(sys.argv) > 1 else 0.35
sigma_radar = float(sys.argv[2]) if len(sys.argv) > 2 else 0.10
step_std = float(sys.argv[3]) if len(sys.argv) > 3 else 0.18
t_epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 20
s_epochs = int(sys.argv[5]) if len(sys.argv) > 5 else 15
alpha = float(sys.argv[6]) if len(sys.argv) > 6 else 0.7
T = float(sys.argv[7]) if len(sys.argv) > 7 else 3.0
seeds = [int(s) for s in (sys.argv[8].split(",") if len(sys.argv) > 8 else [1, 2])]

cfg = ScenarioConfig(
    modalities={"img": ModalityConfig(16, sigma_img),
                "radar": ModalityConfig(4, sigma_radar)},
    trajectory=TrajectoryConfig(step_std=step_std),
)
teacher_spec = ModelSpec(cfg.input_dim, (128, 128), 4, 8)
student_spec = ModelSpec(cfg.input_dim, (16,), 4, 8)
print(f"ratio {count_params(teacher_spec)/count_params(student_spec):.1f}x "
      f"({count_params(teacher_spec)} / {count_params(student_spec)})")

t_cfg = TrainConfig(t_epochs, 64, 0.15, stream="teacher")
s_cfg = TrainConfig(s_epochs, 64, 0.15, stream="student")

rows = {"teacher": [], "resp": [], "rel": [], "plain": []}
t0 = time.time()
for seed in seeds:
    scn = generate_scenario(cfg, seed)
    rng = Rng(seed)
    teacher, _ = train_supervised(teacher_spec, scn.server_set, t_cfg, rng.child("teacher"))
    t_teach = time.time() - t0
    for node in range(cfg.num_nodes):
        local = scn.per_node_sets[node]
        hold = scn.node_holdouts[node]
        r = rng.child(f"node{node}/distill")
        resp = distill_offline(teacher, student_spec, local,
                               KDConfig("response", T, alpha), s_cfg, r)
        rel = distill_offline(teacher, student_spec, local,
                              KDConfig("relation", alpha=0.4), s_cfg, r)
        plain, _ = train_supervised(student_spec, local, s_cfg, r)
        for name, model in (("teacher", teacher), ("resp", resp), ("rel", rel),
                            ("plain", plain)):
            acc = np.mean(list(evaluate_topk(model, hold, (2,)).values()))
            rows[name].append(acc)
    print(f"seed {seed} done at {time.time()-t0:.0f}s (teacher at {t_teach:.0f}s)")

for name, vals in rows.items():
    print(f"{name:8s} top2 mean {100*np.mean(vals):.2f}")
print(f"resp margin  {100*(np.mean(rows['resp']) - np.mean(rows['plain'])):+.2f}")
print(f"rel margin   {100*(np.mean(rows['rel']) - np.mean(rows['plain'])):+.2f}")
print(f"teacher gap  {100*(np.mean(rows['teacher']) - np.mean(rows['resp'])):+.2f} (resp)")
print(f"teacher gap  {100*(np.mean(rows['teacher']) - np.mean(rows['rel'])):+.2f} (rel)")
print(f"total {time.time()-t0:.0f}s")
