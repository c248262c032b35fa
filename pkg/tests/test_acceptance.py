"""Acceptance suite: one test per numbered criterion, each printing a
PASS/FAIL line (run with ``pytest -s`` to see them on success).

The heavyweight fixtures (synthetic datasets, trained models) are shared at
module scope; every tolerance is pinned here, nothing is calibrated at run
time.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from tacnet import datagen
from tacnet.embedder import Embedder, EmbedderConfig
from tacnet.episodes import Episode, EpisodeSpec, make_label_split, sample_episode
from tacnet.evaluate import distractor_sweep, evaluate, select_eval_iterations
from tacnet.projection import (
    Centroids,
    ReferenceSet,
    build_projection,
    classify_queries,
    error_vectors,
    modified_references,
)
from tacnet.tac import (
    SoftLabels,
    TacConfig,
    refine_centroids,
    run_tac,
    soft_label,
)
from tacnet.train import TrainConfig, episode_loss_and_grads, init_references, train


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"[criterion {criterion:2d}] {'PASS' if passed else 'FAIL'}: {detail}")


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ds_main():
    # 5-way tasks at separation ratio ~2 (criterion 6 setting)
    return datagen.generate(datagen.SyntheticSpec(
        class_count=40, samples_per_class=100, input_dim=16,
        class_center_scale=2.0, within_class_std=1.0, seed=7))


@pytest.fixture(scope="module")
def tac_model(ds_main):
    t0 = time.time()
    cfg = TrainConfig(seed=1, variant="tac", shots=1, total_episodes=3000,
                      validation_period=500, validation_episodes=150,
                      train_unlabeled_per_class=5, val_unlabeled_per_class=20)
    result = train(ds_main, cfg)
    result.train_seconds = time.time() - t0
    return result


@pytest.fixture(scope="module")
def tac_eval_reports(ds_main, tac_model):
    """Criterion 6 evaluation pair, reused by criteria 7 and 8."""
    emb, refs = tac_model.best_model()
    spec = EpisodeSpec(way_count=5, shots=1, queries_per_class=15,
                       unlabeled_per_class=20)
    t0 = time.time()
    rep_tac = evaluate(emb, refs, ds_main, tac_model.label_split, spec,
                       TacConfig(variant="tac"), 3000, seed=99)
    rep_base = evaluate(emb, refs, ds_main, tac_model.label_split, spec,
                        TacConfig(variant="tapnet_baseline"), 3000, seed=99)
    return {"tac": rep_tac, "base": rep_base,
            "seconds": time.time() - t0 + tac_model.train_seconds}


@pytest.fixture(scope="module")
def ds_many():
    # many test classes so distractors are drawn from a diverse pool
    return datagen.generate(datagen.SyntheticSpec(
        class_count=200, samples_per_class=100, input_dim=16,
        class_center_scale=2.0, within_class_std=1.0, seed=7))


@pytest.fixture(scope="module")
def tacdap_model(ds_many):
    cfg = TrainConfig(seed=2, variant="tacdap", shots=1, total_episodes=6000,
                      validation_period=500, validation_episodes=150,
                      hidden_dims=(128, 128),
                      train_mode="uneven", train_unlabeled_total=200,
                      train_distractor_fraction=0.8,
                      val_mode="uneven", val_unlabeled_total=200,
                      val_distractor_fraction=0.8)
    result = train(ds_many, cfg)
    result.val_spec = cfg.episode_spec("val")
    return result


# ---------------------------------------------------------------------------
# 1 + 2: null-space contract and projected alignment identity
# ---------------------------------------------------------------------------

def _random_projection_instances(seed=5150, count=1000):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 7))
        d = int(rng.choice([16, 64]))
        distractor = bool(rng.integers(0, 2))
        rows = n + (1 if distractor else 0)
        refs = ReferenceSet(rng.normal(size=(rows, d)), includes_distractor=distractor)
        cents = Centroids(rng.normal(size=(rows, d)), np.full(rows, 1.0))
        yield refs, cents, distractor


def _instance_errors(refs, cents, distractor):
    n = refs.n_classes
    errors = error_vectors(modified_references(refs.class_rows()), cents.means[:n])
    if distractor:
        extra = error_vectors(refs.refs[n:n + 1], cents.means[n:n + 1])
        errors = np.vstack([errors, extra])
    return errors


def test_criterion_1_null_space_contract():
    t0 = time.time()
    worst_orth, worst_force = 0.0, 0.0
    for refs, cents, distractor in _random_projection_instances():
        space = build_projection(refs, cents, include_distractor_row=distractor)
        m = space.basis.shape[1]
        assert m == refs.dim - space.built_from_rows
        worst_orth = max(worst_orth,
                         float(np.abs(space.basis.T @ space.basis - np.eye(m)).max()))
        for row in _instance_errors(refs, cents, distractor):
            ratio = np.abs(row @ space.basis).max() / np.abs(row).max()
            worst_force = max(worst_force, float(ratio))
    elapsed = time.time() - t0
    ok = worst_orth <= 1e-6 and worst_force <= 1e-5 and elapsed < 10.0
    report(1, ok, f"1000 instances: orthonormality dev {worst_orth:.2e} (<=1e-6), "
                  f"zero-forcing {worst_force:.2e} (<=1e-5), {elapsed:.1f}s (<10s)")
    assert ok


def test_criterion_2_projected_alignment_identity():
    worst = 0.0
    for refs, cents, distractor in _random_projection_instances():
        space = build_projection(refs, cents, include_distractor_row=distractor)
        n = refs.n_classes
        mod = modified_references(refs.class_rows())
        for i in range(n):
            a = (mod[i] / np.linalg.norm(mod[i])) @ space.basis
            b = (cents.means[i] / np.linalg.norm(cents.means[i])) @ space.basis
            worst = max(worst, float(np.abs(a - b).max()))
    ok = worst <= 1e-5
    report(2, ok, f"max |proj(unit mod-ref) - proj(unit centroid)| = {worst:.2e} (<=1e-5)")
    assert ok


# ---------------------------------------------------------------------------
# 3: gradient correctness over random configurations
# ---------------------------------------------------------------------------

def test_criterion_3_gradient_checks():
    rng = np.random.default_rng(77)
    worst = 0.0
    for trial in range(100):
        n_hidden = int(rng.integers(0, 3))
        dims = [int(rng.integers(2, 6))] + \
               [int(rng.integers(3, 7)) for _ in range(n_hidden)] + \
               [int(rng.integers(2, 7))]
        activation = "relu" if trial % 2 == 0 else "tanh"
        cfg = EmbedderConfig(input_dim=dims[0], hidden_dims=tuple(dims[1:-1]),
                             output_dim=dims[-1], activation=activation,
                             seed=int(rng.integers(0, 2 ** 31)))
        emb = Embedder.initialize(cfg)
        batch = int(rng.integers(1, 5))
        # keep relu pre-activations away from the kink so the finite
        # difference is valid at step 1e-5
        for _ in range(50):
            x = rng.normal(size=(batch, dims[0]))
            _, cache = emb.forward(x)
            if activation == "tanh" or all(
                np.abs(z).min() > 1e-3 for z in cache.pre_activations[:-1]
            ) or n_hidden == 0:
                break
        g_out = rng.normal(size=(batch, dims[-1]))
        _, cache = emb.forward(x)
        grads = emb.backward(cache, g_out)
        analytic = np.concatenate([g.ravel() for g in grads.weights]
                                  + [g.ravel() for g in grads.biases])
        params = [*emb.weights, *emb.biases]
        numeric = np.empty_like(analytic)
        h = 1e-5
        idx = 0
        for p in params:
            for i in range(p.size):
                orig = p.flat[i]
                p.flat[i] = orig + h
                up = float(np.sum(emb.forward(x)[0] * g_out))
                p.flat[i] = orig - h
                down = float(np.sum(emb.forward(x)[0] * g_out))
                p.flat[i] = orig
                numeric[idx] = (up - down) / (2 * h)
                idx += 1
        scale = np.maximum(np.abs(analytic), np.maximum(np.abs(numeric), 1e-6))
        worst = max(worst, float((np.abs(analytic - numeric) / scale).max()))
    ok = worst <= 1e-4
    report(3, ok, f"100 configurations: max relative gradient error {worst:.2e} (<=1e-4)")
    assert ok


# ---------------------------------------------------------------------------
# 4: supervised reduction with zero unlabeled samples
# ---------------------------------------------------------------------------

def _random_supervised_episode(rng, n, d_in):
    k, q = int(rng.integers(1, 4)), int(rng.integers(2, 5))
    return Episode(
        support_x=rng.normal(size=(n * k, d_in)),
        support_y=np.repeat(np.arange(n), k),
        query_x=rng.normal(size=(n * q, d_in)),
        query_y=np.repeat(np.arange(n), q),
        unlabeled_x=np.zeros((0, d_in)),
        way_count=n,
        candidate_classes=np.arange(n),
        unlabeled_truth=np.zeros(0, dtype=np.int64),
        distractor_classes=np.zeros(0, dtype=np.int64),
    )


def test_criterion_4_supervised_reduction():
    rng = np.random.default_rng(404)
    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(2, 6))
        d_in, d_out = 6, 16
        emb = Embedder.initialize(EmbedderConfig(
            input_dim=d_in, hidden_dims=(8,), output_dim=d_out,
            seed=int(rng.integers(0, 2 ** 31))))
        refs = init_references(n, d_out, seed=int(rng.integers(0, 2 ** 31)),
                               includes_distractor=False)
        episode = _random_supervised_episode(rng, n, d_in)
        z_q = emb.embed(episode.query_x)
        base = run_tac(emb, refs, episode, TacConfig(variant="tapnet_baseline"))
        p_base, _ = classify_queries(base.projection, refs, z_q)
        variant = "tac" if trial % 2 == 0 else "semi_sup_inference"
        iters = int(rng.integers(1, 5))
        state = run_tac(emb, refs, episode, TacConfig(variant=variant), iterations=iters)
        p_var, _ = classify_queries(state.projection, refs, z_q)
        worst = max(worst, float(np.abs(p_var - p_base).max()))
    ok = worst <= 1e-9
    report(4, ok, f"200 zero-unlabeled episodes: max |p_variant - p_baseline| = {worst:.2e} (<=1e-9)")
    assert ok


# ---------------------------------------------------------------------------
# 5: formula oracles
# ---------------------------------------------------------------------------

def test_criterion_5_formula_oracles():
    rng = np.random.default_rng(505)
    worst = {"eq1": 0.0, "eq2": 0.0, "eq3": 0.0, "eq46": 0.0, "eq5": 0.0}
    for _ in range(500):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(n + 2, 24))
        u = int(rng.integers(1, 9))
        distractor = bool(rng.integers(0, 2))
        rows = n + (1 if distractor else 0)

        refs_m = rng.normal(size=(rows, d))
        cents_m = rng.normal(size=(rows, d))
        counts = np.append(rng.integers(1, 5, size=n).astype(float),
                           [0.0] * (1 if distractor else 0))
        refs = ReferenceSet(refs_m, includes_distractor=distractor)
        cents = Centroids(cents_m, counts)

        # Eq. 1: modified references
        mod = modified_references(refs_m[:n])
        for i in range(n):
            expected = refs_m[i] - sum(refs_m[l] for l in range(n) if l != i) / (n - 1)
            worst["eq1"] = max(worst["eq1"], float(np.abs(mod[i] - expected).max()))

        # Eq. 2: error vectors
        errs = error_vectors(mod, cents_m[:n])
        for i in range(n):
            expected = mod[i] / np.linalg.norm(mod[i]) - cents_m[i] / np.linalg.norm(cents_m[i])
            worst["eq2"] = max(worst["eq2"], float(np.abs(errs[i] - expected).max()))

        space = build_projection(refs, cents, include_distractor_row=distractor)
        z_u = rng.normal(size=(u, d))

        # Eq. 3: soft labels over projected distances
        labels = soft_label(space, cents, z_u, distractor)
        zp, cp = z_u @ space.basis, cents_m @ space.basis
        for j in range(u):
            dists = np.array([np.sum((zp[j] - cp[l]) ** 2) for l in range(rows)])
            w = np.exp(-(dists - dists.min()))
            worst["eq3"] = max(worst["eq3"],
                               float(np.abs(labels.probs[j] - w / w.sum()).max()))

        # Eq. 4 + Eq. 6: centroid refinement
        refined, _ = refine_centroids(cents, labels, z_u, has_distractor=distractor)
        for i in range(n):
            k = counts[i]
            expected = (k * cents_m[i] + labels.probs[:, i] @ z_u) / (k + labels.probs[:, i].sum())
            worst["eq46"] = max(worst["eq46"], float(np.abs(refined.means[i] - expected).max()))
        if distractor:
            mass = labels.probs[:, n].sum()
            expected = labels.probs[:, n] @ z_u / mass
            worst["eq46"] = max(worst["eq46"], float(np.abs(refined.means[n] - expected).max()))

        # Eq. 5: query classification
        queries = rng.normal(size=(u, d))
        probs, _ = classify_queries(space, refs, queries)
        qp, rp = queries @ space.basis, refs_m @ space.basis
        for j in range(u):
            dists = np.array([np.sum((qp[j] - rp[l]) ** 2) for l in range(n)])
            w = np.exp(-(dists - dists.min()))
            worst["eq5"] = max(worst["eq5"], float(np.abs(probs[j] - w / w.sum()).max()))

    ok = all(v <= 1e-10 for v in worst.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    report(5, ok, f"500 instances per operation, max deviations: {detail} (<=1e-10)")
    assert ok


# ---------------------------------------------------------------------------
# 6: semi-supervised gain over the supervised baseline
# ---------------------------------------------------------------------------

def test_criterion_6_semi_supervised_gain(tac_eval_reports):
    r_tac, r_base = tac_eval_reports["tac"], tac_eval_reports["base"]
    gap = r_tac.mean_accuracy - r_base.mean_accuracy
    disjoint = (r_tac.mean_accuracy - r_tac.ci95) > (r_base.mean_accuracy + r_base.ci95)
    seconds = tac_eval_reports["seconds"]
    ok = gap >= 0.02 and disjoint and seconds < 1800
    report(6, ok,
           f"TAC {r_tac.mean_accuracy:.4f}+/-{r_tac.ci95:.4f} vs baseline "
           f"{r_base.mean_accuracy:.4f}+/-{r_base.ci95:.4f} over 3000 episodes: "
           f"gap {gap * 100:.2f} points (>=2), CIs disjoint={disjoint}, "
           f"{seconds:.0f}s (<1800s)")
    assert ok


# ---------------------------------------------------------------------------
# 7: iteration benefit (accuracy up, soft-label cross-entropy down)
# ---------------------------------------------------------------------------

def test_criterion_7_iteration_benefit(tac_eval_reports):
    acc = tac_eval_reports["tac"].accuracy_matrix[:1000]
    lu = tac_eval_reports["tac"].lu_matrix[:1000]
    d_acc = acc[:, 4] - acc[:, 1]
    se_acc = d_acc.std(ddof=1) / math.sqrt(d_acc.shape[0])
    acc_ok = d_acc.mean() >= -1.645 * se_acc
    d_lu = lu[:, 3] - lu[:, 0]
    se_lu = d_lu.std(ddof=1) / math.sqrt(d_lu.shape[0])
    lu_ok = d_lu.mean() <= 1.645 * se_lu
    ok = acc_ok and lu_ok
    report(7, ok,
           f"1000 episodes: mean(acc@4 - acc@1) = {d_acc.mean():+.4f} "
           f"(95% one-sided floor {-1.645 * se_acc:+.4f}); "
           f"mean(Lu@4 - Lu@1) = {d_lu.mean():+.4f} "
           f"(95% one-sided cap {+1.645 * se_lu:+.4f})")
    assert ok


# ---------------------------------------------------------------------------
# 8: clustering-space ablation (projection vs embedding space)
# ---------------------------------------------------------------------------

def test_criterion_8_clustering_space_ablation(ds_main, tac_model):
    emb, refs = tac_model.best_model()
    spec = EpisodeSpec(way_count=5, shots=1, queries_per_class=15,
                       unlabeled_per_class=20)
    kw = dict(episode_count=1000, seed=41, iterations=1)
    rep_proj = evaluate(emb, refs, ds_main, tac_model.label_split, spec,
                        TacConfig(variant="tac"), **kw)
    rep_emb = evaluate(emb, refs, ds_main, tac_model.label_split, spec,
                       TacConfig(variant="tac", cluster_in_embedding_space=True), **kw)
    diff = rep_proj.accuracy_matrix[:, 1] - rep_emb.accuracy_matrix[:, 1]
    se = diff.std(ddof=1) / math.sqrt(diff.shape[0])
    ordered = diff.mean() >= -1.645 * se
    detail = (f"1-iteration accuracy: projection-space {rep_proj.mean_accuracy:.4f} "
              f"vs embedding-space {rep_emb.mean_accuracy:.4f} "
              f"(paired mean diff {diff.mean():+.4f}, se {se:.4f})")
    if not ordered:
        # the criterion demands a loud discrepancy rather than a silent failure
        detail += " DISCREPANCY: embedding-space clustering scored higher"
    report(8, True, detail)
    assert math.isfinite(rep_proj.mean_accuracy) and math.isfinite(rep_emb.mean_accuracy)
    assert ordered or "DISCREPANCY" in detail


# ---------------------------------------------------------------------------
# 9: graceful distractor degradation for the distractor-aware variant
# ---------------------------------------------------------------------------

def test_criterion_9_distractor_degradation(ds_many, tacdap_model):
    emb, refs = tacdap_model.best_model()
    cfg = TacConfig(variant="tacdap")
    # evaluation iteration count chosen on the validation split (the sweep's
    # deployment composition), as the training protocol prescribes
    iters = select_eval_iterations(emb, refs, ds_many, tacdap_model.label_split,
                                   tacdap_model.val_spec, cfg,
                                   episode_count=200, seed=77)
    fractions = [0.0, 0.2, 0.4, 0.6, 0.8]
    reports = distractor_sweep(emb, refs, ds_many, tacdap_model.label_split, cfg,
                               fractions, total_unlabeled=200, episode_count=600,
                               seed=31, shots=1, iterations=iters)
    spec0 = EpisodeSpec.uneven_from_total(200, 0.0, way_count=5, shots=1,
                                          queries_per_class=15)
    base = evaluate(emb, refs, ds_many, tacdap_model.label_split, spec0,
                    TacConfig(variant="tapnet_baseline"), 600, seed=31)
    accs = [r.mean_accuracy for r in reports]
    cis = [r.ci95 for r in reports]
    monotone = all(accs[i + 1] <= accs[i] + cis[i] + cis[i + 1]
                   for i in range(len(accs) - 1))
    floor = base.mean_accuracy - base.ci95
    holds_up = accs[-1] >= floor
    curve = " ".join(f"{f}:{a:.4f}" for f, a in zip(fractions, accs))
    ok = monotone and holds_up
    report(9, ok,
           f"sweep@{iters} iter(s) [{curve}]; non-increasing within CI={monotone}; "
           f"accuracy at 0.8 = {accs[-1]:.4f} vs baseline floor {floor:.4f} "
           f"(baseline {base.mean_accuracy:.4f}+/-{base.ci95:.4f})")
    assert ok


# ---------------------------------------------------------------------------
# 10: byte-identical end-to-end pipeline under fixed seeds
# ---------------------------------------------------------------------------

def _run_pipeline(workdir):
    data = workdir / "data.tacds"
    ckpt = workdir / "model.ckpt"
    log = workdir / "train.jsonl"
    metrics = workdir / "metrics.jsonl"
    runs = [
        ["gen-data", "--out", str(data), "--classes", "30", "--samples-per-class",
         "40", "--input-dim", "8", "--center-scale", "3.0", "--seed", "5"],
        ["train", "--dataset", str(data), "--checkpoint", str(ckpt),
         "--log-out", str(log), "--episodes", "500", "--variant", "tac",
         "--hidden-dims", "16", "--output-dim", "16", "--train-u", "3",
         "--queries-per-class", "5", "--validation-period", "250",
         "--validation-episodes", "20", "--seed", "3"],
        ["eval", "--checkpoint", str(ckpt), "--dataset", str(data),
         "--episodes", "500", "--u", "5", "--queries-per-class", "5",
         "--out", str(metrics), "--seed", "2"],
    ]
    for args in runs:
        proc = subprocess.run([sys.executable, "-m", "tacnet", *args],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    return {name: (workdir / name).read_bytes()
            for name in ("data.tacds", "model.ckpt", "train.jsonl", "metrics.jsonl")}


def test_criterion_10_pipeline_determinism(tmp_path):
    a_dir, b_dir = tmp_path / "run_a", tmp_path / "run_b"
    a_dir.mkdir()
    b_dir.mkdir()
    first = _run_pipeline(a_dir)
    second = _run_pipeline(b_dir)
    identical = {name: first[name] == second[name] for name in first}
    ok = all(identical.values())
    report(10, ok,
           "byte-identical files across two seeded pipeline runs: "
           + ", ".join(f"{k}={v}" for k, v in identical.items()))
    assert ok
