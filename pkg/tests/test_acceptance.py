"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

import json
import math
import re
import time

import numpy as np
import pytest

from ateaug import grad
from ateaug.augment import apply_pipeline, ate_augment, entropy_input_gradient, parse_pipeline
from ateaug.cli import main
from ateaug.data import SyntheticSpec, synth_clip
from ateaug.features import AudioClip, compute_dataset_stats, lfbe_extract, normalize
from ateaug.metrics import far_at_fixed_frr, far_frr_curve
from ateaug.model import ModelConfig, build_model, model_forward
from ateaug.train import TrainConfig, evaluate, train

from helpers import as64, tiny_config
from oracles import naive_conv2d


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


def features_for(spec):
    """Normalised-later LFBE tensors [n, 1, frames, mels] and labels for a synthetic spec."""
    xs, ys = [], []
    for c in range(spec.n_classes):
        for i in range(spec.clips_per_class):
            clip = AudioClip(synth_clip(spec, c, c * spec.clips_per_class + i), spec.sample_rate)
            xs.append(lfbe_extract(clip).matrix)
            ys.append(c)
    return np.stack(xs)[:, None], np.array(ys, dtype=np.int64)


# -- 1 ------------------------------------------------------------------------------

def gradient_cases(rng):
    n = rng.standard_normal
    y = np.array([0, 2, 1])
    soft = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.1, 0.1, 0.8]])
    return {
        "affine": (lambda t, x, w, b: grad.total(grad.square(grad.affine(x, w, b))),
                   [n((3, 4)), n((4, 5)), n(5)]),
        "affine_relu": (lambda t, x, w, b: grad.total(grad.square(grad.affine(x, w, b, "relu"))),
                        [n((3, 4)), n((4, 5)), n(5)]),
        "conv_same": (lambda t, x, k, b: grad.total(grad.square(grad.conv2d(x, k, b))),
                      [n((2, 2, 6, 5)), n((3, 2, 3, 3)), n(3)]),
        "conv_valid_stride": (lambda t, x, k, b: grad.total(grad.square(
            grad.conv2d(x, k, b, (2, 1), "valid", "relu"))), [n((2, 1, 7, 6)), n((2, 1, 3, 2)), n(2)]),
        "conv_same_stride": (lambda t, x, k, b: grad.total(grad.square(
            grad.conv2d(x, k, b, (2, 2), "same"))), [n((1, 2, 8, 7)), n((2, 2, 5, 3)), n(2)]),
        "reshape_flatten_scale": (lambda t, x: grad.total(grad.square(grad.scale(
            grad.flatten(grad.reshape(x, (2, 3, 4))), 0.7))), [n((2, 12))]),
        "softmax_ce_index": (lambda t, z: grad.cross_entropy(grad.softmax(z), y), [n((3, 3))]),
        "softmax_ce_soft": (lambda t, z: grad.cross_entropy(grad.softmax(z), soft), [n((3, 3))]),
        "entropy_mean": (lambda t, z: grad.entropy(grad.softmax(z)), [n((4, 5))]),
        "entropy_sum": (lambda t, z: grad.entropy(grad.softmax(z), "sum"), [n((4, 5))]),
    }


def test_criterion_1_gradient_oracle_suite(report):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    errors = {name: grad.check_gradients(build, inputs)
              for name, (build, inputs) in gradient_cases(rng).items()}

    cfg = tiny_config(n_classes=3, frames=16, mels=16)
    params = as64(build_model(cfg, seed=4))
    names = sorted(params)

    def composition(tape, x, *values):
        logits = model_forward(cfg, dict(zip(names, values)), x)
        return grad.entropy(grad.softmax(logits))

    x = rng.standard_normal((2, 1, 16, 16))
    errors["entropy∘softmax∘cnn"] = grad.check_gradients(
        composition, [x] + [params[k] for k in names])
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 120
    report(1, ok, f"{len(errors)} cases, worst {worst} rel err {errors[worst]:.2e} (< 1e-4), "
                  f"{elapsed:.1f}s (< 120s)")
    assert ok, errors


# -- 2 ------------------------------------------------------------------------------

def test_criterion_2_ate_contract(report):
    failures = []
    pairs = 120
    for seed in range(pairs):
        rng = np.random.default_rng(seed)
        n_classes = int(rng.integers(2, 5))
        cfg = tiny_config(n_classes=n_classes, frames=int(rng.integers(6, 12)), mels=8)
        params = build_model(cfg, seed=seed)
        dtype = np.float64 if seed % 4 == 0 else np.float32
        if dtype is np.float64:
            params = as64(params)
        x = (3 * rng.standard_normal((int(rng.integers(1, 6)), 1, cfg.input_frames, 8))).astype(dtype)
        eps = float(rng.choice([1e-3, 0.05, 0.1, 1.0, 10.0]))
        g = entropy_input_gradient(cfg, params, x)
        aug = ate_augment(cfg, params, x, eps)
        step = aug.astype(np.float64) - x.astype(np.float64)
        if np.abs(step).max() > eps:
            failures.append((seed, "bound", np.abs(step).max()))
        if float((g.astype(np.float64) * step).sum()) < 0 or ((g * step) < 0).any():
            failures.append((seed, "ascent"))
        same = ate_augment(cfg, params, x, 0.0)
        if same.tobytes() != x.tobytes() or same is x:
            failures.append((seed, "eps=0"))
    ok = not failures
    report(2, ok, f"{pairs} seeded (model, batch) pairs, |Δ|∞ ≤ ε, <∇E, Δ> ≥ 0, ε=0 identity; "
                  f"{len(failures)} failures")
    assert ok, failures[:5]


# -- 3 ------------------------------------------------------------------------------

def test_criterion_3_entropy_bounds(report):
    rng = np.random.default_rng(3)
    total, bad = 0, 0
    for n in range(2, 22):
        logits = rng.standard_normal((5000, n)) * rng.uniform(0.01, 30, (5000, 1))
        probs = grad.softmax(logits).data
        e = grad.entropy(probs, reduction="none").data
        bad += int(((e < 0) | (e > math.log(n))).sum())
        total += len(e)
    uniform_err = max(abs(grad.entropy(np.full((1, n), 1.0 / n)).item() - math.log(n))
                      for n in range(2, 1001))
    one_hot = max(grad.entropy(np.eye(n)[[0]]).item() for n in range(2, 200))
    ok = total >= 100_000 and bad == 0 and uniform_err <= 1e-9 and one_hot == 0.0
    report(3, ok, f"{total} distributions, {bad} outside [0, ln N]; uniform err {uniform_err:.1e} "
                  f"(≤ 1e-9); one-hot max {one_hot}")
    assert ok


# -- 4 ------------------------------------------------------------------------------

def test_criterion_4_conv_matches_naive_loops(report):
    rng = np.random.default_rng(4)
    mismatches = 0
    for trial in range(200):
        h, w = (int(v) for v in rng.integers(1, 9, 2))
        kh, kw = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
        stride = tuple(int(v) for v in rng.integers(1, 3, 2))
        padding = "same" if trial % 2 else "valid"
        dtype = np.float32 if trial % 3 else np.float64
        cin, cout, b = (int(v) for v in rng.integers(1, 4, 3))
        x = rng.standard_normal((b, cin, h, w)).astype(dtype)
        k = rng.standard_normal((cout, cin, kh, kw)).astype(dtype)
        bias = rng.standard_normal(cout).astype(dtype)
        pads = []
        for size, kern, s in ((h, kh, stride[0]), (w, kw, stride[1])):
            out, lo, hi = grad.conv_output_geometry(size, kern, s, padding)
            pads.append((lo, hi))
        got = grad.conv2d(x, k, bias, stride, padding).data
        ref = naive_conv2d(x, k, bias, stride, pads)
        if got.shape != ref.shape or got.tobytes() != ref.tobytes():
            mismatches += 1
    ok = mismatches == 0
    report(4, ok, f"200 random instances (H, W ≤ 8), {mismatches} not bit-identical")
    assert ok


# -- 5 ------------------------------------------------------------------------------

def test_criterion_5_gate_fraction(report):
    pipeline = parse_pipeline("specaugment", p_aug=0.5,
                              stage_params={"specaugment": {"max_freq_width": 1,
                                                            "max_time_width": 1}})
    rng = np.random.default_rng(5)
    batch = np.zeros((1, 1, 4, 4), dtype=np.float32)
    labels = np.eye(2, dtype=np.float32)[[0]]
    hits = sum(apply_pipeline(pipeline, batch, labels, None, None, rng)[2] for _ in range(10_000))
    frac = hits / 10_000
    ok = 0.48 <= frac <= 0.52
    report(5, ok, f"augmented fraction {frac:.4f} over 10,000 batches (in [0.48, 0.52])")
    assert ok


# -- 6 ------------------------------------------------------------------------------

def test_criterion_6_ate_epoch_time(report):
    x, y = features_for(SyntheticSpec(clips_per_class=32, seed=6))
    stats = compute_dataset_stats([x])
    x = normalize(x, stats)
    cfg = ModelConfig.default(2, x.shape[2], x.shape[3])
    params = build_model(cfg, seed=0)
    seconds = {}
    for name in ("none", "ate"):
        tc = TrainConfig(epochs=3, batch_size=8, pipeline=parse_pipeline(name, p_aug=0.5))
        rep, _ = train(x, y, x[:8], y[:8], cfg, tc, params=params)
        seconds[name] = sum(e.seconds for e in rep.epochs) / len(rep.epochs)
    ratio = seconds["ate"] / seconds["none"]
    ok = ratio <= 2.2
    report(6, ok, f"64 clips, default model: NoAug {seconds['none']:.2f}s/epoch, "
                  f"ATE {seconds['ate']:.2f}s/epoch, ratio {ratio:.2f} (≤ 2.2)")
    assert ok


# -- 7 ------------------------------------------------------------------------------

def test_criterion_7_end_to_end_smoke(report):
    start = time.perf_counter()
    tones = ((400.0,), (2000.0,))
    x_tr, y_tr = features_for(SyntheticSpec(clips_per_class=32, class_tones=tones,
                                            noise_level=0.5, seed=70))
    x_va, y_va = features_for(SyntheticSpec(clips_per_class=8, class_tones=tones,
                                            noise_level=0.5, seed=71))
    x_te, y_te = features_for(SyntheticSpec(clips_per_class=16, class_tones=tones,
                                            noise_level=0.5, seed=72))
    stats = compute_dataset_stats([x_tr])
    x_tr, x_va, x_te = (normalize(a, stats) for a in (x_tr, x_va, x_te))
    cfg = ModelConfig.default(2, x_tr.shape[2], x_tr.shape[3])
    results = {}
    for name in ("none", "ate"):
        tc = TrainConfig(epochs=20, batch_size=16, seed=7, pipeline=parse_pipeline(name, 0.5))
        _, ckpt = train(x_tr, y_tr, x_va, y_va, cfg, tc)
        results[name] = (evaluate(cfg, ckpt.params, x_tr, y_tr)[1],
                         evaluate(cfg, ckpt.params, x_te, y_te)[1])
    elapsed = time.perf_counter() - start
    (tr0, te0), (_, te1) = results["none"], results["ate"]
    ok = tr0 >= 0.95 and te0 >= 0.90 and abs(te1 - te0) <= 0.05 and elapsed < 600
    report(7, ok, f"NoAug train {tr0:.3f} (≥ 0.95) held-out {te0:.3f} (≥ 0.90); "
                  f"ATE held-out {te1:.3f} (within 0.05); {elapsed:.0f}s (< 600s)")
    assert ok


# -- 8 ------------------------------------------------------------------------------

def test_criterion_8_cmd_train_determinism(report, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": {"synthetic": {"clips_per_class": 8, "noise_level": 0.3, "seed": 8},
                    "val_fraction": 0.25},
        "train": {"epochs": 3, "batch_size": 4, "seed": 8},
        "augment": {"pipeline": "ate,specaugment", "p_aug": 0.5},
    }))
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        log = [line.split("\t") for line in (out / "epochs.log").read_text().splitlines()]
        seconds = log[0].index("seconds")
        numeric = [[v for i, v in enumerate(row) if i != seconds] for row in log]
        runs.append(((out / "best.ckpt").read_bytes(), numeric))
    same_ckpt = runs[0][0] == runs[1][0]
    same_log = runs[0][1] == runs[1][1]
    ok = same_ckpt and same_log
    report(8, ok, f"checkpoints bitwise identical: {same_ckpt}; "
                  f"epoch-log numeric columns identical: {same_log}")
    assert ok


# -- 9 ------------------------------------------------------------------------------

def test_criterion_9_far_frr_suite(report):
    rng = np.random.default_rng(9)
    monotone = True
    for _ in range(1000):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        curve = far_frr_curve(scores, labels)
        far = np.array([p.far for p in curve])
        frr = np.array([p.frr for p in curve])
        monotone &= bool((np.diff(far) <= 0).all() and (np.diff(frr) >= 0).all()
                         and far[0] == 1 and frr[0] == 0 and far[-1] == 0 and frr[-1] == 1)

    curve = far_frr_curve([0.9, 0.8, 0.4, 0.7, 0.3, 0.1], [1, 1, 1, 0, 0, 0])
    hand = [(-math.inf, 1, 0), (0.1, 1, 0), (0.3, 2 / 3, 0), (0.4, 1 / 3, 0),
            (0.7, 1 / 3, 1 / 3), (0.8, 0, 1 / 3), (0.9, 0, 2 / 3), (math.inf, 0, 1)]
    exact = [(p.threshold, p.far, p.frr) for p in curve] == hand
    # hand selection: lowest FAR among points whose FRR does not exceed the target
    selections = {0.0: 1 / 3, 0.2: 1 / 3, 1 / 3: 0.0, 0.5: 0.0, 1.0: 0.0}
    picked = {t: far_at_fixed_frr(curve, t) for t in selections}
    ok = monotone and exact and picked == selections
    report(9, ok, f"1000 random sweeps monotone: {monotone}; 6-example curve exact: {exact}; "
                  f"far_at_fixed_frr hand selections match: {picked == selections}")
    assert ok


# -- 10 -----------------------------------------------------------------------------

def test_criterion_10_kfold_harness_reports_mean_std(report, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": {"synthetic": {"n_classes": 3, "clips_per_class": 5, "seed": 10}},
        "model": {"conv_layers": [{"filters": 8, "kernel": [3, 3], "stride": [4, 4]}],
                  "fc_hidden": [16]},
        "train": {"epochs": 2, "batch_size": 4},
        "augment": {"pipeline": "ate,specaugment"},
        "eval": {"k": 5},
    }))
    rc = main(["eval", "--config", str(cfg), "--out", str(tmp_path / "k"), "--kfold"])
    table = (tmp_path / "k" / "metrics.tsv").read_text()
    summary = re.search(r"summary\t(\d\.\d{3}±\d\.\d{3})", table)
    ok = rc == 0 and summary is not None
    report(10, ok, f"5-fold harness completed (rc {rc}), reported "
                   f"{summary.group(1) if summary else 'nothing'} in mean±std form")
    assert ok
