"""Acceptance gates for the full pipeline.

One test per shipped claim; each prints a single ``[PASS]``/``[FAIL]``
verdict line (visible under ``pytest -s``) with the measured numbers, then
asserts.  Oracles are self-contained copies so a regression in the library
cannot silently rewrite its own gate.
"""

import json
import time

import numpy as np
import pytest

import misinfogat.attribution as at
import misinfogat.autodiff as ad
import misinfogat.cli as cli
import misinfogat.gat as M
import misinfogat.graphlime as gl
import misinfogat.synth as synth
import misinfogat.training as training
from misinfogat.features import EMBED_DIM, FeatureSet
from misinfogat.graph import EdgeTag, InteractionGraph, SplitTag, k_hop_neighborhood
from misinfogat.pipeline import load_bundle, tweet_indices


def _verdict(tag, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
    assert ok, f"{tag}: {detail}"


# ---------------------------------------------------------------------------
# shared toy-graph builders (duplicated from the unit suites on purpose)


def make_graph(n, extra_edges=()):
    pairs = {(i, i): EdgeTag.SELF_LOOP for i in range(n)}
    for s, d in extra_edges:
        pairs.setdefault((s, d), EdgeTag.CO_USER)
    order = sorted(pairs, key=lambda e: (e[1], e[0]))
    return InteractionGraph(
        node_ids=[f"n{i}" for i in range(n)],
        src=np.array([e[0] for e in order], dtype=np.int64),
        dst=np.array([e[1] for e in order], dtype=np.int64),
        tag=np.array([pairs[e] for e in order], dtype=np.int8),
        labels=np.full(n, -1, dtype=np.int8),
        splits=np.full(n, int(SplitTag.UNLABELED), dtype=np.int8),
    )


def random_graph(rng, n, density=0.3):
    extra = [(int(s), int(d)) for s, d in rng.integers(0, n, size=(int(density * n * n), 2))]
    return make_graph(n, extra)


def random_features(rng, n):
    # O(1) scale keeps analytic gradients above the central-difference floor
    return FeatureSet(
        node_ids=[f"n{i}" for i in range(n)],
        shallow=rng.normal(size=(n, 3)),
        text_pooled=rng.normal(size=(n, EMBED_DIM)),
        text_tokens=[None] * n,
    )


def token_fixture(seed=0, n=5, n_tokens=4):
    rng = np.random.default_rng(seed)
    g = make_graph(n, [(i, i + 1) for i in range(n - 1)] + [(i + 1, i) for i in range(n - 1)])
    toks, pooled = [], np.zeros((n, EMBED_DIM))
    for i in range(n):
        vecs = rng.normal(size=(n_tokens, EMBED_DIM))
        toks.append([(f"w{i}_{j}", vecs[j]) for j in range(n_tokens)])
        pooled[i] = vecs.mean(axis=0)
    feats = FeatureSet(
        node_ids=list(g.node_ids),
        shallow=rng.normal(size=(n, 3)),
        text_pooled=pooled,
        text_tokens=toks,
    )
    return g, feats, M.init_model(M.Mode.MULTIMODAL, seed=seed)


# ---------------------------------------------------------------------------
# 1. ablation ordering on the planted both-modality benchmark


def test_ablation_ordering(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "bundle"
    synth.synth_generate(synth.SynthSpec(n_nodes=400, placement="both", seed=0), out)
    bundle = load_bundle(out)
    report = training.run_ablation(bundle, seeds=(0, 1, 2, 3, 4), config=training.TrainConfig())
    elapsed = time.perf_counter() - t0
    mg = report.cells[M.Mode.GRAPH_ONLY]["mean"]
    mt = report.cells[M.Mode.TEXT_ONLY]["mean"]
    mm = report.cells[M.Mode.MULTIMODAL]["mean"]
    ok = (
        mm - mg >= 0.01
        and mm - mt >= 0.01
        and min(mg, mt, mm) >= 0.75
        and elapsed <= 600.0
    )
    _verdict(
        "ablation-ordering",
        ok,
        f"multi={mm:.4f} graph={mg:.4f} text={mt:.4f} "
        f"margins=({mm - mg:+.4f},{mm - mt:+.4f}) elapsed={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. finite-difference correctness of every op plus the full composite


def _scalarize(t, tape):
    flat = ad.flatten(t, tape) if t.ndim > 1 else t
    w = ad.Tensor(np.linspace(0.5, 1.5, flat.shape[0]))
    s = ad.segment_sum(ad.mul(flat, w, tape), np.zeros(flat.shape[0], dtype=int), 1, tape)
    return ad.select(s, 0, tape)


def _op_cases(rng):
    """(name, f, inputs) triples covering every differentiable op."""
    x = rng.normal(size=7)
    x[np.abs(x) < 1e-2] = 0.5  # stay clear of the relu/elu kink
    idx = rng.integers(0, 5, size=8)
    seg = np.sort(rng.integers(0, 3, size=8))
    scale = ad.Tensor(rng.normal(size=4))
    targets = (rng.uniform(size=6) > 0.5).astype(float)
    mask = np.ones(6, dtype=bool)
    return [
        ("matmul", lambda tape, a, b: _scalarize(ad.matmul(a, b, tape), tape),
         [rng.normal(size=(4, 5)), rng.normal(size=(5, 3))]),
        ("add", lambda tape, a, b: _scalarize(ad.add(a, b, tape), tape),
         [rng.normal(size=(3, 4)), rng.normal(size=4)]),
        ("mul", lambda tape, a, b: _scalarize(ad.mul(a, b, tape), tape),
         [rng.normal(size=6), rng.normal(size=6)]),
        ("scale_rows", lambda tape, a: _scalarize(ad.scale_rows(a, scale, tape), tape),
         [rng.normal(size=(4, 3))]),
        ("concat", lambda tape, a, b: _scalarize(ad.concat([a, b], 0, tape), tape),
         [rng.normal(size=3), rng.normal(size=4)]),
        ("flatten", lambda tape, a: _scalarize(ad.flatten(a, tape), tape),
         [rng.normal(size=(3, 4))]),
        ("leaky_relu", lambda tape, a: _scalarize(ad.leaky_relu(a, 0.2, tape), tape), [x]),
        ("elu", lambda tape, a: _scalarize(ad.elu(a, tape), tape), [x]),
        ("sigmoid", lambda tape, a: _scalarize(ad.sigmoid(a, tape), tape), [x]),
        ("one_minus", lambda tape, a: _scalarize(ad.one_minus(a, tape), tape), [x]),
        ("gather_rows", lambda tape, a: _scalarize(ad.gather_rows(a, idx, tape), tape),
         [rng.normal(size=(5, 3))]),
        ("embed_row", lambda tape, v: _scalarize(ad.embed_row(v, 2, 5, tape), tape),
         [rng.normal(size=3)]),
        ("segment_sum", lambda tape, a: _scalarize(ad.segment_sum(a, seg, 3, tape), tape),
         [rng.normal(size=8)]),
        ("segment_softmax", lambda tape, a: _scalarize(ad.segment_softmax(a, seg, tape), tape),
         [rng.normal(size=8)]),
        ("mean_rows", lambda tape, a: _scalarize(ad.mean_rows(a, tape), tape),
         [rng.normal(size=(6, 3))]),
        ("select", lambda tape, a: ad.select(a, 1, tape), [rng.normal(size=5)]),
        ("bce_loss", lambda tape, p: ad.bce_loss(p, targets, mask, tape),
         [rng.uniform(0.1, 0.9, size=6)]),
    ]


def _composite_err(graph_seed, param_seed):
    rng = np.random.default_rng(graph_seed)
    n = 5
    g = random_graph(rng, n)
    feats = random_features(rng, n)
    targets = (rng.uniform(size=n) > 0.5).astype(float)
    mask = np.ones(n, dtype=bool)
    base = M.init_model(M.Mode.MULTIMODAL, param_seed)
    names = list(base.parameters())

    def f(tape, *arrays):
        tensors = dict(zip(names, arrays))
        model = M.GatModel(
            mode=M.Mode.MULTIMODAL,
            proj_W=tensors["proj_W"], proj_b=tensors["proj_b"],
            layer1=M.GatLayerParams(tensors["l1_W"], tensors["l1_a_src"], tensors["l1_a_dst"]),
            layer2=M.GatLayerParams(tensors["l2_W"], tensors["l2_a_src"], tensors["l2_a_dst"]),
        )
        p, _ = M.model_forward(model, g, feats, tape)
        return ad.bce_loss(p, targets, mask, tape)

    return ad.grad_check(f, [t.data for t in base.parameters().values()])


def test_gradient_correctness():
    t0 = time.perf_counter()
    worst_name, worst = "", 0.0
    for seed in range(10):
        for name, f, inputs in _op_cases(np.random.default_rng(700 + seed)):
            err = ad.grad_check(f, inputs)
            if err > worst:
                worst_name, worst = f"{name}/s{seed}", err
        err = _composite_err(1000 + seed, seed)
        if err > worst:
            worst_name, worst = f"composite/s{seed}", err
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed <= 60.0
    _verdict(
        "gradient-correctness",
        ok,
        f"worst_rel_err={worst:.3e} ({worst_name}) over 17 ops + composite x 10 seeds, "
        f"elapsed={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 3. attention rows sum to one on random graphs


def test_attention_normalization():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(2, 21))
        g = random_graph(rng, n)
        feats = random_features(rng, n)
        model = M.init_model(M.Mode.MULTIMODAL, seed)
        _, alphas = M.model_forward(model, g, feats)
        for alpha in alphas:
            sums = np.zeros(n)
            np.add.at(sums, g.dst, alpha.data)
            worst = max(worst, float(np.max(np.abs(sums - 1.0))))
    ok = worst <= 1e-10
    _verdict("attention-normalization", ok,
             f"max |sum-1|={worst:.3e} over 50 graphs, both layers")


# ---------------------------------------------------------------------------
# 4. coordinate descent matches a projected-gradient oracle


def _pgd_solve(A, l, rho, tol=1e-13, max_iters=500_000):
    AtA = A @ A.T
    Atl = A @ l
    step = 1.0 / max(float(np.linalg.eigvalsh(AtA)[-1]), 1e-12)
    beta = np.zeros(A.shape[0])
    for _ in range(max_iters):
        new = np.maximum(0.0, beta - step * (AtA @ beta - Atl + rho))
        done = np.max(np.abs(new - beta)) < tol
        beta = new
        if done:
            break
    return beta


def _objective(A, l, rho, beta):
    r = l - A.T @ beta
    return 0.5 * float(r @ r) + rho * float(beta.sum())


def _random_instance(seed, d=6):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    vecs = []
    for _ in range(d):
        K, _ = gl.center_normalize(gl.gaussian_kernel_matrix(rng.normal(size=n), 1.0))
        vecs.append(K.ravel())
    L, _ = gl.center_normalize(gl.gaussian_kernel_matrix(rng.normal(size=n), 1.0))
    return np.stack(vecs), L.ravel(), float(rng.uniform(0.02, 0.3))


def test_lasso_oracle_equivalence():
    t0 = time.perf_counter()
    worst_gap, neg, increases = 0.0, 0.0, 0.0
    for seed in range(20):
        A, l, rho = _random_instance(3000 + seed)
        res = gl.hsic_lasso_solve(A, l, rho)
        oracle = _pgd_solve(A, l, rho)
        worst_gap = max(worst_gap, abs(_objective(A, l, rho, res.beta) - _objective(A, l, rho, oracle)))
        neg = min(neg, float(res.beta.min()))
        diffs = np.diff(res.history)
        if diffs.size:
            increases = max(increases, float(diffs.max()))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-8 and neg >= 0.0 and increases <= 1e-12 and elapsed <= 60.0
    _verdict(
        "lasso-oracle-equivalence",
        ok,
        f"max obj gap={worst_gap:.3e} min beta={neg:.1e} "
        f"max sweep increase={increases:.1e} over 20 instances, elapsed={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 5. planted-signal recovery through the explainer


def _top_group(placement, seed, tmp):
    out = tmp / f"{placement}{seed}"
    synth.synth_generate(synth.SynthSpec(n_nodes=120, placement=placement, seed=seed), out)
    bundle = load_bundle(out)
    cfg = training.TrainConfig(mode=M.Mode.MULTIMODAL, epochs=400, seed=seed)
    model, _ = training.train(
        bundle.graph, bundle.features, bundle.graph.labels, bundle.graph.splits, cfg
    )
    g = bundle.graph
    # explain the best-connected labeled tweet: largest 2-hop set, ties by index
    cands = [i for i in tweet_indices(bundle) if g.labels[i] != -1]
    cands.sort(key=lambda i: (-len(k_hop_neighborhood(g, i, 2)), i))
    for idx in cands:
        try:
            return gl.explain_node(model, g, bundle.features, idx).ranking[0]
        except gl.NeighborhoodTooSmall:
            continue
    raise AssertionError("no explainable node in bundle")


def test_planted_signal_recovery(tmp_path):
    shallow = set(gl.GROUP_NAMES[:3])
    graph_hits = [_top_group("graph", s, tmp_path) in shallow for s in range(5)]
    text_hits = [_top_group("text", s, tmp_path) == "Text" for s in range(5)]
    ok = sum(graph_hits) >= 4 and sum(text_hits) >= 4
    _verdict(
        "planted-signal-recovery",
        ok,
        f"graph-planted shallow-top {sum(graph_hits)}/5, text-planted Text-top {sum(text_hits)}/5",
    )


# ---------------------------------------------------------------------------
# 6. integrated-gradients diagnostics


def test_integrated_gradients_diagnostics(monkeypatch):
    # (a) linear model: the Riemann sum is exact at any step count
    g, feats, model = token_fixture(0)
    rng = np.random.default_rng(11)
    w = ad.Tensor(rng.normal(size=EMBED_DIM))

    def linear_forward(model, graph, features, tape=None, pooled_tensor=None):
        if pooled_tensor is None:
            pooled_tensor = ad.Tensor(features.text_pooled)
        return ad.matmul(pooled_tensor, w, tape), []

    node = 2
    _, x = at._token_matrix(feats, node)
    fx = float(x.mean(axis=0) @ w.data)
    sign = 1.0 if fx > 0.5 else -1.0
    expected = sign * x * (w.data / x.shape[0])
    linear_err = 0.0
    with monkeypatch.context() as mp:
        mp.setattr(at, "model_forward", linear_forward)
        for steps in (1, 2, 7, 50):
            attr = at.integrated_gradients(model, g, feats, node, steps=steps)
            linear_err = max(linear_err, float(np.max(np.abs(attr - expected))))
        linear_gap = at.completeness_gap(model, g, feats, node, attr)
    linear_ok = linear_err <= 1e-12 and linear_gap <= 1e-12

    # (b) nonlinear fixture: gap shrinks with step count and is tiny at 512
    gaps = {}
    for m in (8, 16, 64, 128, 256, 512):
        attr = at.integrated_gradients(model, g, feats, node, steps=m)
        gaps[m] = at.completeness_gap(model, g, feats, node, attr)
    delta = at.completeness_gap(model, g, feats, node, np.zeros_like(attr))  # |F(x)-F(0)|
    halving_ok = all(gaps[2 * m] <= gaps[m] + 1e-9 for m in (8, 64, 256))
    bound = 1e-4 * delta + 1e-8
    ok = linear_ok and halving_ok and gaps[512] <= bound
    _verdict(
        "integrated-gradients-diagnostics",
        ok,
        f"linear_err={linear_err:.1e} gap512={gaps[512]:.3e} (bound {bound:.3e}) "
        f"halving={'ok' if halving_ok else 'violated'}",
    )


# ---------------------------------------------------------------------------
# 7. byte-identical CLI artifacts across repeated runs


def _run_once(root):
    bundle = root / "bundle"
    assert cli.main(["synth", "--nodes", "40", "--signal", "both",
                     "--seed", "0", "--out", str(bundle)]) == 0
    ckpt = root / "model.gatcp"
    assert cli.main(["train", "--bundle", str(bundle), "--checkpoint", str(ckpt),
                     "--mode", "multi", "--seed", "0", "--epochs", "25"]) == 0
    rep = root / "run_report.json"
    assert cli.main(["evaluate", "--bundle", str(bundle), "--modes", "graph,text,multi",
                     "--seeds", "0,1", "--epochs", "20", "--out", str(rep)]) == 0
    nid = load_bundle(bundle).graph.node_ids[0]
    exp = root / "explanations"
    assert cli.main(["explain", "--bundle", str(bundle), "--checkpoint", str(ckpt),
                     "--node", nid, "--out", str(exp)]) == 0
    return {
        "synth/nodes.tsv": (bundle / "nodes.tsv").read_bytes(),
        "synth/edges.tsv": (bundle / "edges.tsv").read_bytes(),
        "synth/splits.tsv": (bundle / "splits.tsv").read_bytes(),
        "synth/embeddings.mmeb": (bundle / "embeddings.mmeb").read_bytes(),
        "train/checkpoint": ckpt.read_bytes(),
        "train/history": (root / "model.gatcp.history.json").read_bytes(),
        "evaluate/report": rep.read_bytes(),
        f"explain/{nid}": (exp / f"{nid}.json").read_bytes(),
    }


def test_cli_determinism(tmp_path, capsys):
    first = _run_once(tmp_path / "a")
    second = _run_once(tmp_path / "b")
    capsys.readouterr()
    mismatched = sorted(k for k in first if first[k] != second.get(k))
    ok = not mismatched and set(first) == set(second)
    _verdict("cli-determinism", ok,
             f"{len(first)} artifacts compared, mismatches={mismatched or 'none'}")


# ---------------------------------------------------------------------------
# 8. f1 hand cases


def test_f1_hand_cases():
    # TP=2 FP=1 FN=1 on the positive (Misinformation=0) class
    _, _, f_hand, _ = training.f1_score([0, 0, 1, 0, 1], [0, 0, 0, 1, 1])
    _, _, f_perfect, _ = training.f1_score([0, 1, 0, 1], [0, 1, 0, 1])
    _, _, f_wrong, _ = training.f1_score([1, 0, 1, 0], [0, 1, 0, 1])
    ok = (
        abs(f_hand - 2.0 / 3.0) < 1e-15
        and f_perfect == 1.0
        and f_wrong == 0.0
    )
    _verdict("f1-hand-cases", ok,
             f"hand={f_hand:.6f} (want 0.666667) perfect={f_perfect} all-wrong={f_wrong}")


# ---------------------------------------------------------------------------
# 9. mode isolation is bitwise


def test_mode_isolation():
    rng = np.random.default_rng(29)
    n = 6
    g = random_graph(rng, n)
    feats = random_features(rng, n)

    m_graph = M.init_model(M.Mode.GRAPH_ONLY, 1)
    p0, _ = M.model_forward(m_graph, g, feats)
    perturbed_text = FeatureSet(feats.node_ids, feats.shallow,
                                feats.text_pooled + 5.0, feats.text_tokens)
    p1, _ = M.model_forward(m_graph, g, perturbed_text)
    graph_ok = p0.data.tobytes() == p1.data.tobytes()

    m_text = M.init_model(M.Mode.TEXT_ONLY, 1)
    q0, _ = M.model_forward(m_text, g, feats)
    perturbed_shallow = FeatureSet(feats.node_ids, feats.shallow - 3.0,
                                   feats.text_pooled, feats.text_tokens)
    q1, _ = M.model_forward(m_text, g, perturbed_shallow)
    text_ok = q0.data.tobytes() == q1.data.tobytes()

    ok = graph_ok and text_ok
    _verdict("mode-isolation", ok,
             f"graph-only text-invariant={graph_ok} text-only shallow-invariant={text_ok}")
