"""Built-in invariant suite behind ``simulate selftest``.

Each check runs a batch of seeded randomized cases and returns one pass/fail
line; the suite covers the numeric identities the rest of the simulator
relies on.
"""

from __future__ import annotations

import numpy as np

from .distillation import (
    KDConfig,
    combined_loss,
    feature_kd_loss,
    relation_kd_loss,
    response_kd_loss,
)
from .metrics import topk_accuracy
from .models import ModelSpec, backward, forward_cached, init_model, serialize
from .numerics import Rng, dense_forward, grad_check, kl_divergence, softmax_ce_grad, softmax_t


def _random_logits(rng: Rng, batch: int, classes: int) -> np.ndarray:
    return rng.normal(shape=(batch, classes), scale=3.0)


def check_softmax_rows(cases: int = 100) -> tuple[bool, str]:
    rng = Rng(101)
    worst = 0.0
    for _ in range(cases):
        b = int(rng.integers(1, 6))
        c = int(rng.integers(2, 9))
        t = float(10.0 ** rng.uniform(-3, 9))
        z = _random_logits(rng, b, c)
        p = softmax_t(z, t)
        worst = max(worst, float(np.abs(p.sum(axis=1) - 1.0).max()))
        shifted = softmax_t(z + rng.uniform(-5, 5), t)
        worst = max(worst, float(np.abs(shifted - p).max()))
        if not (p.argmax(axis=1) == z.argmax(axis=1)).all():
            return False, "softmax changed an argmax"
    return worst < 1e-12, f"max deviation {worst:.2e}"


def check_kl_properties(cases: int = 100) -> tuple[bool, str]:
    rng = Rng(202)
    low = 0.0
    for _ in range(cases):
        b = int(rng.integers(1, 5))
        c = int(rng.integers(2, 8))
        p = softmax_t(_random_logits(rng, b, c), 1.0)
        q = softmax_t(_random_logits(rng, b, c), 1.0)
        low = min(low, kl_divergence(p, q))
        if kl_divergence(p, p) != 0.0:
            return False, "KL(p, p) != 0"
    return low >= -1e-12, f"min divergence {low:.2e}"


def check_dense_forward(cases: int = 25) -> tuple[bool, str]:
    rng = Rng(303)
    for _ in range(cases):
        b, i, o = (int(rng.integers(1, 6)) for _ in range(3))
        w = rng.normal(shape=(o, i))
        bias = rng.normal(shape=o)
        x = rng.normal(shape=(b, i))
        y = dense_forward(w, bias, x)
        ref = np.empty((b, o))
        for r in range(b):
            for c in range(o):
                acc = 0.0
                for k in range(i):
                    acc += x[r, k] * w[c, k]
                ref[r, c] = acc + bias[c]
        if not (y == ref).all():
            return False, "mismatch against the naive triple loop"
    return True, f"{cases} exact matches"


def check_gradients() -> tuple[bool, str]:
    rng = Rng(404)
    spec = ModelSpec(3, (5, 4), 2, 3)
    x = rng.normal(shape=(4, 3))
    labels = np.array([[0, 1], [2, 0], [1, 1], [2, 2]])
    worst = 0.0
    for knowledge in ("none", "response", "feature", "relation"):
        teacher = init_model(spec, rng.child(f"t/{knowledge}"))
        model = init_model(spec, rng.child(f"s/{knowledge}"))
        t_res, _ = forward_cached(teacher.spec, teacher.params, x)

        def loss_fn(params, _kn=knowledge, _t_res=t_res):
            res, _ = forward_cached(spec, params, x)
            task = sum(softmax_ce_grad(res.logits_per_slot[s], labels[:, s])[0]
                       for s in range(spec.num_slots))
            if _kn == "none":
                return task
            if _kn == "response":
                kd = response_kd_loss(res.logits_per_slot, _t_res.logits_per_slot, 2.0)
            elif _kn == "feature":
                kd = feature_kd_loss(res.tap_features, _t_res.tap_features)
            else:
                kd = relation_kd_loss(res.tap_features, _t_res.tap_features)
            return combined_loss(task, kd, 0.5)

        params = model.param_list()
        eps_grads = _analytic_grads(spec, params, x, labels, knowledge, t_res)
        err = grad_check(loss_fn, params, eps_grads, eps=1e-5)
        worst = max(worst, err)
    return worst < 1e-4, f"max relative error {worst:.2e}"


def _analytic_grads(spec, params, x, labels, knowledge, t_res):
    from .distillation import _feature_grad, _relation_grad, _response_grad_from_probs

    res, acts = forward_cached(spec, params, x)
    scale = 1.0 if knowledge == "none" else 0.5
    dlogits = []
    for s in range(spec.num_slots):
        _, g = softmax_ce_grad(res.logits_per_slot[s], labels[:, s])
        dlogits.append(scale * g)
    dtap = None
    if knowledge == "response":
        probs = [softmax_t(l, 2.0) for l in t_res.logits_per_slot]
        _, kd_g = _response_grad_from_probs(res.logits_per_slot, probs, 2.0,
                                            np.ones(spec.num_slots))
        dlogits = [d + 0.5 * g for d, g in zip(dlogits, kd_g)]
    elif knowledge == "feature":
        _, dfs, _ = _feature_grad(res.tap_features, t_res.tap_features, None)
        dtap = 0.5 * dfs
    elif knowledge == "relation":
        _, dfs = _relation_grad(res.tap_features, t_res.tap_features, True)
        dtap = 0.5 * dfs
    return backward(spec, params, acts, dlogits, dtap)


def check_relation_invariances(cases: int = 100) -> tuple[bool, str]:
    rng = Rng(505)
    worst = 0.0
    for _ in range(cases):
        b = int(rng.integers(2, 7))
        fs = rng.normal(shape=(b, int(rng.integers(2, 6))))
        ft = rng.normal(shape=(b, int(rng.integers(2, 6))))
        base = relation_kd_loss(fs, ft, normalize=True)
        scale = float(10.0 ** rng.uniform(-2, 2))
        worst = max(worst, abs(relation_kd_loss(scale * fs, ft, True) - base))
        perm = rng.permutation(b)
        worst = max(worst, abs(relation_kd_loss(fs[perm], ft[perm], True) - base))
        if relation_kd_loss(fs, fs, True) > 1e-12:
            return False, "nonzero at identity"
    return worst < 1e-10, f"max drift {worst:.2e}"


def check_alpha_linearity(cases: int = 100) -> tuple[bool, str]:
    rng = Rng(606)
    for _ in range(cases):
        task = float(rng.uniform(0, 5))
        kd = float(rng.uniform(0, 5))
        a = float(rng.uniform(0, 1))
        if combined_loss(task, kd, a) != (1.0 - a) * task + a * kd:
            return False, "not exactly linear in alpha"
    if combined_loss(2.0, 4.0, 0.0) != 2.0 or combined_loss(2.0, 4.0, 1.0) != 4.0:
        return False, "endpoints wrong"
    return True, f"{cases} exact identities"


def check_topk_monotone(cases: int = 50) -> tuple[bool, str]:
    rng = Rng(707)
    for _ in range(cases):
        b = int(rng.integers(1, 20))
        c = int(rng.integers(2, 10))
        z = _random_logits(rng, b, c)
        labels = rng.integers(0, c, b)
        accs = [topk_accuracy(z, labels, k) for k in range(1, c + 1)]
        if any(a2 < a1 for a1, a2 in zip(accs, accs[1:])):
            return False, "top-k decreased with k"
        if accs[-1] != 1.0:
            return False, "top-C != 1"
    return True, f"{cases} monotone cases"


def check_determinism() -> tuple[bool, str]:
    spec = ModelSpec(4, (6,), 2, 4)
    a = serialize(init_model(spec, Rng(99).child("init")))
    b = serialize(init_model(spec, Rng(99).child("init")))
    return a == b, "same seed gives identical bytes"


ALL_CHECKS = (
    ("softmax rows and shift invariance", check_softmax_rows),
    ("kl divergence nonnegativity", check_kl_properties),
    ("dense forward vs naive loop", check_dense_forward),
    ("analytic gradients vs finite differences", check_gradients),
    ("relation loss invariances", check_relation_invariances),
    ("combined loss alpha linearity", check_alpha_linearity),
    ("top-k monotonicity", check_topk_monotone),
    ("seeded determinism", check_determinism),
)


def run_selftest(report=print) -> bool:
    ok = True
    for name, fn in ALL_CHECKS:
        passed, detail = fn()
        ok &= passed
        report(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
