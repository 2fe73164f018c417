"""Acceptance criteria, one test per criterion, each printing a PASS line.

These are the project's exit checks: property suites, independent oracles,
pinned-budget training runs, and byte-determinism contracts.  Tolerances and
budgets are fixed here, not tuned at runtime.  The training-based criteria
(3, 4, 8) dominate the runtime.
"""

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from lsfanim import flame, tensor as T
from lsfanim.ablation import InputGate, VariantSpec, init_variant, run_ablation, variant_forward
from lsfanim.config import RunConfig
from lsfanim.corpus import CorpusConfig, synth_corpus
from lsfanim.features import align_to_fps, derive_seed, init_identity_encoder
from lsfanim.gradcheck import grad_check
from lsfanim.hifb import (
    HifbConfig,
    fusion_update,
    hifb_forward,
    init_hifb,
    init_style_modulator,
    modulate,
    pair_count,
    pair_indices,
    pair_table,
    stream_update,
)
from lsfanim.metrics import RegionMask, ce, diversity, fdd, heatmap_stats, lve, mee, mve
from lsfanim.params import ParamStore, init_rng
from lsfanim.pipeline import (
    PipelineCheckpoint,
    SamplerConfig,
    Stage2Config,
    Stage2Item,
    generate,
    init_stage2,
    sie_forward,
    train_stage2,
)
from lsfanim.tensor import Tensor
from lsfanim.vqvae import (
    MotionSequence,
    Stage1Config,
    init_vqvae,
    nearest_codes,
    stage1_loss,
    stage1_loss_anchored,
    stage1_st_anchor,
    train_stage1,
    write_motion,
)

PASS_LINES = []


def report(criterion: int, text: str) -> None:
    line = f"ACCEPTANCE {criterion} PASS: {text}"
    PASS_LINES.append(line)
    print("\n" + line)


def toy_motion_corpus(n_items: int, t: int, seed: int):
    cfg = CorpusConfig(
        n_subjects=4, sentences_per_cell=1, neutral_sentences=0,
        t_min=t, t_max=t, split_ratios=(0.5, 0.25, 0.25),
    )
    corpus = synth_corpus(seed=seed, cfg=cfg)
    return corpus, corpus.items[:n_items]


def stage2_item(corpus, it) -> Stage2Item:
    return Stage2Item(
        key=it.key,
        m25=align_to_fps(it.motion_features, corpus.cfg.fps),
        e25=align_to_fps(it.emotion_features, corpus.cfg.fps),
        shape=corpus.subject_by_id(it.subject_id).shape,
        gt=it.motion_gt,
    )


# ---------------------------------------------------------------------------
# Criterion 1 - gradient suite: every differentiable op and every composite
# network passes central-difference checks at rel. tol 1e-4 in float64,
# >= 20 random instances each, total under 5 minutes.
# ---------------------------------------------------------------------------


class TestCriterion1Gradients:
    N_INSTANCES = 20
    TOL = 1e-4

    def _random_store(self, rng, arrays):
        store = ParamStore(dtype=np.float64)
        for name, arr in arrays.items():
            store.add(name, arr)
        return store

    def _check(self, f, store, limit=None, seed=0):
        rep = grad_check(f, store, tol=self.TOL, element_limit=limit, sample_seed=seed)
        assert rep.passed, str(rep)
        return rep.n_checked

    def test_gradient_suite(self):
        t0 = time.time()
        checked = 0

        # Primitive ops: full element coverage on small shapes.
        for i in range(self.N_INSTANCES):
            rng = init_rng(1000 + i)
            n, d_in, d_out = (int(x) for x in rng.integers(1, 6, size=3))
            store = self._random_store(rng, {
                "x": rng.standard_normal((n, d_in)),
                "w": rng.standard_normal((d_in, d_out)),
                "b": rng.standard_normal(d_out),
                "g": rng.uniform(0.5, 1.5, d_in),
                "beta": rng.standard_normal(d_in),
            })
            tgt = Tensor(rng.standard_normal((n, d_out)))
            checked += self._check(lambda: T.mse(T.linear(store["x"], store["w"], store["b"]), tgt), store)
            tgt2 = Tensor(rng.standard_normal((n, d_in)))
            ops = {
                "layer_norm": lambda: T.mse(T.layer_norm(store["x"], store["g"], store["beta"]), tgt2),
                "relu": lambda: T.mse(T.relu(store["x"]), tgt2),
                "sigmoid": lambda: T.mse(T.sigmoid(store["x"]), tgt2),
                "softmax": lambda: T.mse(T.softmax_rows(store["x"]), tgt2),
                "concat_rows": lambda: T.mean_all(T.mul(T.concat_rows([store["x"], store["x"]]),
                                                        T.concat_rows([store["x"], store["x"]]))),
                "mse_self": lambda: T.mse(T.mul(store["x"], store["x"]), tgt2),
            }
            for fn in ops.values():
                checked += self._check(fn, store)

        # Multi-head attention with projections.
        for i in range(self.N_INSTANCES):
            rng = init_rng(2000 + i)
            d = int(rng.choice([4, 8]))
            tq, tk = (int(x) for x in rng.integers(1, 5, size=2))
            arrays = {nm: rng.uniform(-0.4, 0.4, (d, d)) for nm in ("wq", "wk", "wv", "wo")}
            arrays.update({nm: rng.uniform(-0.1, 0.1, d) for nm in ("bq", "bk", "bv", "bo")})
            store = self._random_store(rng, arrays)
            q = Tensor(rng.standard_normal((tq, d)))
            k = Tensor(rng.standard_normal((tk, d)))
            v = Tensor(rng.standard_normal((tk, d)))
            tgt = Tensor(rng.standard_normal((tq, d)))

            def mha():
                out = T.multi_head_attention(
                    q, k, v, 2,
                    store["wq"], store["bq"], store["wk"], store["bk"],
                    store["wv"], store["bv"], store["wo"], store["bo"],
                )
                return T.mse(out, tgt)

            checked += self._check(mha, store)

        # Composite networks at tiny dims.
        cfg = HifbConfig(layers=1, heads=2, d=8, n_f=2)
        for i in range(self.N_INSTANCES):
            rng = init_rng(3000 + i)
            t_len = int(rng.integers(1, 4))
            store = ParamStore(dtype=np.float64)
            prng = init_rng(4000 + i)
            init_style_modulator(store, 4, 6, 6, cfg.d, prng)
            init_hifb(store, cfg, prng)
            m = Tensor(rng.standard_normal((t_len, 6)))
            e = Tensor(rng.standard_normal((t_len, 6)))
            z = Tensor(rng.standard_normal((1, 4)))
            tgt_d = Tensor(rng.standard_normal((t_len, cfg.d)))
            tgt_tok = Tensor(rng.standard_normal((cfg.n_f, cfg.d)))
            pairs = Tensor(rng.standard_normal((3, 2 * cfg.d)))
            stream = Tensor(rng.standard_normal((t_len, cfg.d)))

            def f_modulate():
                mt, et = modulate(store, m, e, z)
                return T.mse(T.add(mt, et), tgt_d)

            def f_stream():
                return T.mse(stream_update(store, "hifb.l0.m", store["hifb.tokens"], stream, cfg.heads), tgt_d)

            def f_fusion():
                return T.mse(fusion_update(store, "hifb.l0", store["hifb.tokens"], pairs, cfg.heads), tgt_tok)

            def f_hifb():
                return T.mse(hifb_forward(store, m, e, z, cfg), tgt_d)

            for fn in (f_modulate, f_stream, f_fusion, f_hifb):
                checked += self._check(fn, store, limit=6, seed=i)

        # sie_forward end to end (includes the 300->128 identity MLP).
        for i in range(self.N_INSTANCES):
            rng = init_rng(5000 + i)
            s2cfg = Stage2Config(d=8, d_id=4, latent_dim=4, heads=2, hifb=cfg)
            store = ParamStore(dtype=np.float64)
            init_stage2(store, s2cfg, init_rng(6000 + i), d_m=6, d_e=6)
            t_len = int(rng.integers(1, 4))
            from lsfanim.features import FeatureSequence
            from lsfanim.flame import NeutralShape

            m25 = FeatureSequence(25, rng.standard_normal((t_len, 6)).astype(np.float32), "motion")
            e25 = FeatureSequence(25, rng.standard_normal((t_len, 6)).astype(np.float32), "emotion")
            shape = NeutralShape(rng.standard_normal(300).astype(np.float32))
            tgt = Tensor(rng.standard_normal((t_len, 4)))
            checked += self._check(
                lambda: T.mse(sie_forward(store, m25, e25, shape, s2cfg), tgt),
                store, limit=4, seed=i,
            )

        # stage1_loss through its anchored straight-through surrogate (the
        # raw loss is discontinuous at code-assignment flips; the surrogate is
        # the smooth function whose exact gradient the ST backward computes,
        # and a unit test asserts both backwards coincide at the base point).
        for i in range(self.N_INSTANCES):
            rng = init_rng(7000 + i)
            store = ParamStore(dtype=np.float64)
            init_vqvae(store, 4, 4, init_rng(8000 + i))
            motion = MotionSequence(fps=25, frames=rng.standard_normal((2, 53)).astype(np.float32))
            anchor = stage1_st_anchor(store, motion, heads=2)
            checked += self._check(
                lambda: stage1_loss_anchored(store, motion, heads=2, anchor=anchor),
                store, limit=4, seed=i,
            )

        elapsed = time.time() - t0
        assert elapsed < 300, f"gradient suite took {elapsed:.0f}s (budget 300s)"
        report(1, f"gradient suite: {checked} elements across ops and composites, "
                  f"rel tol {self.TOL}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# Criterion 2 - quantizer equivalence with a brute-force scan, ties included.
# ---------------------------------------------------------------------------


def test_criterion_2_quantizer_brute_force():
    rng = init_rng(42)
    n_pairs = 1000
    for trial in range(n_pairs):
        n = int(rng.integers(2, 65))
        c = int(rng.integers(1, 17))
        t = int(rng.integers(1, 9))
        book = rng.standard_normal((n, c)).astype(np.float32)
        z = rng.standard_normal((t, c)).astype(np.float32)
        if trial % 50 == 0:
            # Engineer exact ties: duplicate a row of the codebook.
            book[n // 2] = book[0]
        idx, _ = nearest_codes(z, book)
        for row in range(t):
            best_j, best_d = 0, np.inf
            for j in range(n):
                d = np.sum((z[row] - book[j]) ** 2)
                if d < best_d:
                    best_j, best_d = j, d
            assert idx[row] == best_j, f"trial {trial} row {row}: {idx[row]} != {best_j}"
    report(2, f"quantizer matches brute-force scan on {n_pairs} random (z, codebook) pairs, "
              "lowest-index ties included")


# ---------------------------------------------------------------------------
# Criterion 3 - stage-1 overfit: 4 items, T=32, 2000 steps at lr 1e-4,
# reconstruction MSE < 1e-3, under 5 minutes.
# ---------------------------------------------------------------------------


def test_criterion_3_stage1_overfit():
    t0 = time.time()
    corpus, items = toy_motion_corpus(n_items=4, t=32, seed=3)
    motions = [it.motion_gt for it in items]
    cfg = Stage1Config(lr=1e-4, batch_size=4, max_epochs=10**9, max_steps=2000, patience=None, seed=0)
    arrays, log = train_stage1(motions, [], cfg)
    store = ParamStore()
    init_vqvae(store, cfg.latent_dim, cfg.codebook_size, init_rng(cfg.seed))
    store.load_arrays(arrays)
    recon = float(np.mean([stage1_loss(store, m, cfg.heads)[1]["reconstruction"] for m in motions]))
    elapsed = time.time() - t0
    assert elapsed < 300, f"stage-1 overfit took {elapsed:.0f}s (budget 300s)"
    assert recon < 1e-3, f"reconstruction MSE {recon:.2e} not under 1e-3 after 2000 steps at lr 1e-4"
    report(3, f"stage-1 overfit: reconstruction MSE {recon:.2e} < 1e-3 "
              f"in 2000 steps at lr 1e-4 ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 4 - stage-2 overfit: 2 items, 5000 steps at lr 1e-5 (or the
# documented lr 1e-4 fallback), final training LVE < 20% of initial,
# under 15 minutes.
# ---------------------------------------------------------------------------


def test_criterion_4_stage2_overfit():
    t0 = time.time()
    corpus, items = toy_motion_corpus(n_items=2, t=32, seed=21)
    model, masks = flame.synth_model(seed=2, n_vertices=24)
    train_items = [stage2_item(corpus, it) for it in items]

    s1cfg = Stage1Config(max_steps=4000, max_epochs=10**9, batch_size=4, patience=None, seed=0)
    stage1_arrays, _ = train_stage1([it.motion_gt for it in items], [], s1cfg)

    def mean_lve(ckpt, s2cfg):
        vals = []
        for item in train_items:
            pred = generate(item.m25, item.e25, item.shape, ckpt,
                            SamplerConfig(temperature=0.0, n_samples=1, seed=0), s2cfg)[0]
            gt_v = flame.decode_sequence(model, item.shape, item.gt.frames)
            pr_v = flame.decode_sequence(model, item.shape, pred.frames)
            vals.append(lve(gt_v, pr_v, masks["lip"]))
        return float(np.mean(vals))

    def attempt(lr):
        s2cfg = Stage2Config(lr=lr, batch_size=2, max_epochs=10**9, max_steps=5000, patience=None, seed=0)
        frame = Stage2Config(**{**s2cfg.__dict__, "max_steps": 0, "max_epochs": 0})
        init_ckpt, _ = train_stage2(train_items, [], stage1_arrays, frame)
        initial = mean_lve(init_ckpt, s2cfg)
        ckpt, log = train_stage2(train_items, [], stage1_arrays, s2cfg)
        final = mean_lve(ckpt, s2cfg)
        return initial, final, log

    initial, final, log = attempt(1e-5)
    used_lr = 1e-5
    if final >= 0.2 * initial:
        # The paper's stage-2 rate is too small for a 5000-step overfit at
        # this scale; take the documented fallback.
        initial, final, log = attempt(1e-4)
        used_lr = 1e-4
        log.notes.append("lr fallback: 1e-5 missed the 20% target, rerun at 1e-4")
    elapsed = time.time() - t0
    assert elapsed < 900, f"stage-2 overfit took {elapsed:.0f}s (budget 900s)"
    ratio = final / initial
    assert ratio < 0.2, (
        f"training LVE only reached {ratio:.1%} of initial ({initial:.3f} -> {final:.3f} mm) "
        f"within 5000 steps at lr {used_lr}"
    )
    report(4, f"stage-2 overfit: training LVE {initial:.2f} -> {final:.2f} mm "
              f"({ratio:.1%} of initial) at lr {used_lr} ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 5 - metric oracle suite: all six metrics plus heatmap match naive
# reference loops to 1e-9 on 200 random instances; ce <= mee on every one.
# ---------------------------------------------------------------------------


def test_criterion_5_metric_oracles():
    from _oracles import (
        oracle_diversity,
        oracle_fdd,
        oracle_heatmap,
        oracle_lve,
        oracle_mve,
    )

    rng = init_rng(505)
    for trial in range(200):
        t = int(rng.integers(2, 9))
        v = int(rng.integers(4, 11))
        n = int(rng.integers(1, 5))
        gt = rng.standard_normal((t, v, 3))
        preds = [gt + rng.standard_normal((t, v, 3)) for _ in range(n)]
        template = rng.standard_normal((v, 3))
        lip = RegionMask("lip", np.sort(rng.choice(v, size=2, replace=False)).astype(np.int64))
        upper = RegionMask("upper_face", np.sort(rng.choice(v, size=2, replace=False)).astype(np.int64))
        assert abs(mve(gt, preds[0]) - oracle_mve(gt, preds[0])) < 1e-9
        assert abs(lve(gt, preds[0], lip) - oracle_lve(gt, preds[0], lip)) < 1e-9
        assert abs(fdd(gt, preds[0], upper, template) - oracle_fdd(gt, preds[0], upper, template)) < 1e-9
        assert abs(diversity(preds) - oracle_diversity(preds)) < 1e-9
        m = mee(gt, preds, lip)
        c = ce(gt, preds, lip)
        assert abs(m - float(np.mean([oracle_lve(gt, p, lip) for p in preds]))) < 1e-9
        assert abs(c - float(np.min([oracle_lve(gt, p, lip) for p in preds]))) < 1e-9
        assert c <= m + 1e-12
        assert np.abs(heatmap_stats(gt) - oracle_heatmap(gt)).max() < 1e-9
    report(5, "metric oracle suite: six metrics + heatmap match naive loops to 1e-9 "
              "on 200 instances; ce <= mee everywhere")


# ---------------------------------------------------------------------------
# Criterion 6 - non-determinism contract: tau=0 gives diversity 0 across
# seeds; tau=1 gives diversity > 0 and seed-dependent sample files.
# ---------------------------------------------------------------------------


def test_criterion_6_sampling_contract(tmp_path):
    corpus, items = toy_motion_corpus(n_items=1, t=32, seed=9)
    item = stage2_item(corpus, items[0])
    s2cfg = Stage2Config(seed=0)
    s1 = ParamStore()
    init_vqvae(s1, s2cfg.latent_dim, 64, init_rng(0))
    s2 = ParamStore()
    init_stage2(s2, s2cfg, init_rng(1), d_m=item.m25.dim, d_e=item.e25.dim)
    ckpt = PipelineCheckpoint(stage1=s1.arrays(), stage2=s2.arrays())

    for seed in range(5):
        samples = generate(item.m25, item.e25, item.shape, ckpt,
                           SamplerConfig(temperature=0.0, n_samples=4, seed=seed), s2cfg)
        arrs = [s.frames for s in samples]
        assert all(np.array_equal(arrs[0], a) for a in arrs[1:])
        assert diversity([flame_decode(item, a) for a in arrs]) == 0.0

    sample_bytes = []
    for seed in range(5):
        samples = generate(item.m25, item.e25, item.shape, ckpt,
                           SamplerConfig(temperature=1.0, n_samples=4, seed=seed), s2cfg)
        div = diversity([flame_decode(item, s.frames) for s in samples])
        assert div > 0.0, f"tau=1 diversity was 0 at seed {seed}"
        out = tmp_path / f"seed{seed}"
        out.mkdir()
        for k, s in enumerate(samples):
            write_motion(out / f"item_s{k}.lsfm", s)
        sample_bytes.append(b"".join(sorted(p.read_bytes() for p in out.glob("*.lsfm"))))
    assert len(set(sample_bytes)) == len(sample_bytes), "tau=1 sample files must differ across seeds"
    report(6, "sampling contract: tau=0 -> diversity 0 on 5 seeds; "
              "tau=1 -> diversity > 0 with seed-dependent files")


_DECODE_CACHE = {}


def flame_decode(item, frames):
    if "model" not in _DECODE_CACHE:
        _DECODE_CACHE["model"], _ = flame.synth_model(seed=77, n_vertices=18)
    return flame.decode_sequence(_DECODE_CACHE["model"], item.shape, frames)


# ---------------------------------------------------------------------------
# Criterion 7 - shape and degenerate-input suite.
# ---------------------------------------------------------------------------


def test_criterion_7_shapes_and_degenerates():
    from lsfanim.errors import InputError

    cfg = HifbConfig(layers=2, heads=2, d=8, n_f=2)
    store = ParamStore()
    rng = init_rng(0)
    init_style_modulator(store, 4, 6, 6, cfg.d, rng)
    init_hifb(store, cfg, rng)
    data_rng = init_rng(1)
    for t in (1, 2, 7, 64):
        m = Tensor(data_rng.standard_normal((t, 6)).astype(np.float32))
        e = Tensor(data_rng.standard_normal((t, 6)).astype(np.float32))
        z = Tensor(data_rng.standard_normal((1, 4)).astype(np.float32))
        out = hifb_forward(store, m, e, z, cfg)
        assert out.data.shape == (t, cfg.d), f"T={t}: got {out.data.shape}"

    for t in (1, 2, 5, 9):
        for band in (0, 1, None):
            i_idx, j_idx = pair_indices(t, band)
            expected = t * t if band is None else sum(
                min(t - 1, i + band) - max(0, i - band) + 1 for i in range(t)
            )
            assert len(i_idx) == pair_count(t, band) == expected

    with pytest.raises(InputError):
        hifb_forward(store, Tensor(np.zeros((0, 6))), Tensor(np.zeros((0, 6))),
                     Tensor(np.zeros((1, 4))), cfg)
    report(7, "shape suite: hifb output is TxD for T in {1,2,7,64}; pair-table "
              "cardinalities match closed form for w in {0,1,inf}; T=0 rejected")


# ---------------------------------------------------------------------------
# Criterion 8 - ablation directional check on the default corpus:
# hifb mean |FDD| <= gate mean |FDD| in >= 7 of 10 seeds, under 45 minutes.
# ---------------------------------------------------------------------------


def test_criterion_8_ablation_direction():
    t0 = time.time()
    run_cfg = RunConfig()
    corpus = synth_corpus(0, run_cfg.corpus_config())
    model, masks = flame.synth_model(derive_seed("blendshape", 0), run_cfg.n_vertices)

    s1cfg = Stage1Config(max_steps=1200, max_epochs=10**9, batch_size=8, patience=None, seed=0)
    stage1_arrays, _ = train_stage1(
        [it.motion_gt for it in corpus.items_for_split("train")],
        [it.motion_gt for it in corpus.items_for_split("val")],
        s1cfg,
    )

    # Shared fixed budget for both variants; the comparison, not the absolute
    # numbers, is the target (Table-2 magnitudes are out of scope by spec).
    cfg = Stage2Config(
        d=16, d_id=16, latent_dim=32, heads=4,
        hifb=HifbConfig(layers=2, heads=4, d=16, n_f=4),
        lr=1e-3, batch_size=4, max_epochs=10**9, max_steps=ABLATION_STEPS, patience=None,
    )
    variants = [
        VariantSpec("hifb", "emotion+identity", "hifb"),
        VariantSpec("gate", "emotion+identity", "gate"),
    ]
    seeds = list(range(10))
    result = run_ablation(
        corpus, stage1_arrays, variants, seeds, cfg, model,
        masks["lip"], masks["upper_face"], n_samples=2, temperature=1.0,
    )
    wins = 0
    pairs = []
    for seed in seeds:
        h = next(r["fdd"] for r in result.rows if r["variant"] == "hifb" and r["seed"] == seed)
        g = next(r["fdd"] for r in result.rows if r["variant"] == "gate" and r["seed"] == seed)
        pairs.append((seed, h, g))
        if h <= g:
            wins += 1
    elapsed = time.time() - t0
    detail = ", ".join(f"s{s}: {h:.4f} vs {g:.4f}" for s, h, g in pairs)
    assert elapsed < 2700, f"ablation took {elapsed:.0f}s (budget 2700s)"
    assert wins >= 7, f"hifb FDD <= gate FDD in only {wins}/10 seeds ({detail})"
    report(8, f"ablation: hifb mean FDD <= gate in {wins}/10 seeds ({elapsed:.0f}s) [{detail}]")


ABLATION_STEPS = 800


# ---------------------------------------------------------------------------
# Criterion 9 - CLI byte-determinism with LSF_THREADS=1 for synth-corpus,
# both trainers, generate, and eval.
# ---------------------------------------------------------------------------


def _run_lsf(*args):
    env = dict(os.environ)
    env["LSF_THREADS"] = "1"
    return subprocess.run([sys.executable, "-m", "lsfanim._entry", *map(str, args)],
                          capture_output=True, text=True, env=env)


def _snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_cli_determinism(tmp_path):
    t0 = time.time()
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "seed": 5,
        "dims": {"d": 16, "latent_dim": 16, "codebook_size": 32, "n_f": 4,
                 "layers": 2, "heads": 4, "d_id": 8, "d_m": 16, "d_e": 16},
        "stage1": {"max_epochs": 2, "batch_size": 4, "patience": None},
        "stage2": {"max_epochs": 1, "batch_size": 4, "patience": None, "lr": 1e-4},
        "corpus": {"n_subjects": 4, "sentences_per_cell": 1, "neutral_sentences": 1,
                   "t_min": 25, "t_max": 30, "vertices": 15, "split_ratios": [0.5, 0.25, 0.25]},
    }))

    outputs = []
    for run in ("a", "b"):
        base = tmp_path / run
        corpus_dir = base / "corpus"
        r = _run_lsf("synth-corpus", "--config", config, "--out", corpus_dir)
        assert r.returncode == 0, r.stderr
        r = _run_lsf("train-vqvae", "--config", config, "--corpus", corpus_dir, "--out", base / "vq.lsfc")
        assert r.returncode == 0, r.stderr
        r = _run_lsf("train-encoder", "--config", config, "--corpus", corpus_dir,
                     "--vqvae", base / "vq.lsfc", "--out", base / "enc.lsfc")
        assert r.returncode == 0, r.stderr
        manifest = json.loads((corpus_dir / "manifest.json").read_text())
        key = manifest["items"][0]["key"]
        r = _run_lsf("generate", "--config", config, "--ckpt", base / "enc.lsfc", "--corpus", corpus_dir,
                     "--item", key, "--samples", 2, "--temp", 1.0, "--seed", 3, "--out", base / "gen")
        assert r.returncode == 0, r.stderr
        r = _run_lsf("eval", "--pred", base / "gen", "--corpus", corpus_dir,
                     "--blendshape", corpus_dir / "blendshape.lsfb", "--report", base / "report.json")
        assert r.returncode == 0, r.stderr
        outputs.append(_snapshot(base))
    assert outputs[0] == outputs[1], "CLI outputs differ between identical runs"
    report(9, f"CLI determinism: synth-corpus, train-vqvae, train-encoder, generate, eval "
              f"byte-identical across reruns ({time.time() - t0:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 10 - label-free structural check.
# ---------------------------------------------------------------------------


def test_criterion_10_label_free():
    import inspect

    forbidden = ("emotion_label", "identity_label", "emotion_id", "speaker_id", "one_hot", "label")
    for fn in (sie_forward, generate, train_stage2):
        for name in inspect.signature(fn).parameters:
            assert not any(bad in name.lower() for bad in forbidden), (
                f"{fn.__name__} exposes a label-like parameter {name!r}"
            )

    corpus, items = toy_motion_corpus(n_items=3, t=32, seed=15)
    s2cfg = Stage2Config(seed=0)
    spec = VariantSpec("no-style", "no-style", "style-vector")
    store = ParamStore()
    init_variant(store, spec, s2cfg, d_m=32, d_e=32, rng=init_rng(0))
    total = {"emotion": 0, "identity": 0}
    for it in items:
        item = stage2_item(corpus, it)
        gate = InputGate(item)
        out = variant_forward(store, spec, gate, s2cfg, 32)
        assert out.data.shape == (item.n_frames, s2cfg.latent_dim)
        for k in total:
            total[k] += gate.counts[k]
    assert total == {"emotion": 0, "identity": 0}, total
    report(10, "label-free: inference signatures carry no label inputs; no-style "
               "variant records zero reads of emotion features and identity shape")
