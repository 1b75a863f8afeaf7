"""Command-line entry point: featurize, train, eval, preview, bench.

Exit codes: 0 success, 1 configuration or validation error, 2 training divergence.
"""

import argparse
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .augment import (AtePolicy, AugmentationPipeline, SpecAugmentPolicy, apply_stage,
                      compute_epsilon)
from .config import RunConfig, apply_overrides, load_config
from .data import (FeatureCache, assign_folds, generate_synthetic_dataset, load_manifest,
                   stack_features, stratified_split)
from .errors import AteError, DivergenceError
from .features import compute_dataset_stats, normalize
from .metrics import (accuracy, far_at_fixed_frr, far_frr_curve, kfold_cross_validate,
                      write_curve, write_metrics_table)
from .model import build_model, load_checkpoint
from .train import evaluate, make_fold_runner, train

log = logging.getLogger("ateaug")

BENCH_PIPELINES = ("none", "specaugment", "ate", "ate,specaugment")


@dataclass
class Prepared:
    x: np.ndarray          # raw LFBE, [n, 1, frames, mels]
    y: np.ndarray
    classes: list
    entries: list
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    extracted: int
    cached: int


def _out(args, default="runs"):
    return os.path.abspath(args.out or default)


def prepare(cfg, out_dir):
    """Resolve the dataset, fill the feature cache and split."""
    ds = cfg.dataset
    if ds.manifest is None and ds.synthetic is None:
        raise AteError("dataset section needs either 'manifest' or 'synthetic'")
    if ds.manifest is not None:
        if not os.path.exists(ds.manifest):
            raise AteError(f"manifest not found: {ds.manifest}")
        entries, classes = load_manifest(ds.manifest, cfg.eval.k)
        base_dir = os.path.dirname(ds.manifest)
    else:
        base_dir = os.path.join(out_dir, "data")
        manifest = os.path.join(base_dir, "manifest.tsv")
        if os.path.exists(manifest):
            entries, classes = load_manifest(manifest)
        else:
            _, entries, classes = generate_synthetic_dataset(ds.synthetic, base_dir)
    if len(classes) < 2:
        raise AteError(f"need at least two classes, found {classes}")
    cache = FeatureCache(ds.cache_dir or os.path.join(out_dir, "cache"), cfg.features)
    feats = cache.load(entries, base_dir)
    frames = ds.frames or feats[0].frames
    x = stack_features(feats, frames, float(np.log(cfg.features.log_floor)))
    y = np.array([classes.index(e.label) for e in entries], dtype=np.int64)

    splits = [e.split for e in entries]
    if any(s is not None for s in splits):
        pick = lambda name: np.array([i for i, s in enumerate(splits) if s == name], dtype=np.int64)
        train_idx, val_idx, test_idx = pick("train"), pick("val"), pick("test")
        if len(val_idx) == 0:
            sub_tr, sub_va = stratified_split(y[train_idx], ds.val_fraction, cfg.train.seed)
            train_idx, val_idx = train_idx[sub_tr], train_idx[sub_va]
    else:
        train_idx, val_idx = stratified_split(y, ds.val_fraction, cfg.train.seed)
        test_idx = np.array([], dtype=np.int64)
    return Prepared(x, y, classes, entries, train_idx, val_idx, test_idx,
                    cache.extracted, cache.cached)


def _stats(p):
    return compute_dataset_stats([p.x[p.train_idx]])


def _write_run_metadata(cfg, out_dir, seed):
    os.makedirs(out_dir, exist_ok=True)
    cfg.dump(os.path.join(out_dir, "config.json"))
    with open(os.path.join(out_dir, "versions.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"ateaug\t{__version__}\npython\t{platform.python_version()}\n"
                 f"numpy\t{np.__version__}\nseed\t{seed}\n")


# -- commands ------------------------------------------------------------------------

def cmd_featurize(cfg, args):
    out_dir = _out(args)
    p = prepare(cfg, out_dir)
    stats = _stats(p)
    print(f"{p.extracted} extracted, {p.cached} cached")
    print(f"stats: mean={stats.mean:.6f} std={stats.std:.6f} count={stats.count} "
          f"epsilon={compute_epsilon(stats):.6f} (raw units; 1.0 normalized)")
    return 0


def _normalized_splits(cfg, p):
    stats = _stats(p)
    norm = lambda idx: normalize(p.x[idx], stats)
    mc = cfg.model.build(len(p.classes), p.x.shape[2], p.x.shape[3])
    mc = mc.with_normalization(stats.mean, stats.std if stats.std > 0 else 1.0)
    return stats, mc, norm


def cmd_train(cfg, args):
    out_dir = _out(args)
    tc = cfg.train_config()
    p = prepare(cfg, out_dir)
    stats, mc, norm = _normalized_splits(cfg, p)
    pipeline = tc.pipeline
    print(f"pipeline: {pipeline.describe()} ({pipeline.label()}), p_aug={pipeline.p_aug}")
    _write_run_metadata(cfg, out_dir, tc.seed)
    report, ckpt = train(norm(p.train_idx), p.y[p.train_idx], norm(p.val_idx),
                         p.y[p.val_idx], mc, tc, out_dir=out_dir)
    for e in report.epochs:
        print(f"epoch {e.epoch:3d}  train_loss {e.train_loss:.4f}  val_loss {e.val_loss:.4f}  "
              f"val_acc {e.val_acc:.4f}  lr {e.lr:.2e}  {e.seconds:.1f}s  aug {e.augmented_batches}")
    summary = [
        ("pipeline", pipeline.describe()),
        ("pipeline_label", pipeline.label()),
        ("p_aug", pipeline.p_aug),
        ("seed", tc.seed),
        ("epochs", tc.epochs),
        ("batch_size", tc.batch_size),
        ("n_train", len(p.train_idx)),
        ("n_val", len(p.val_idx)),
        ("classes", ",".join(p.classes)),
        ("feature_mean", repr(stats.mean)),
        ("feature_std", repr(stats.std)),
        ("best_epoch", report.best_epoch),
        ("best_val_acc", repr(ckpt.metric)),
        ("steps", report.steps),
        ("augmented_batches", report.augmented_batches),
        ("checkpoint", report.checkpoint_path),
    ]
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        for key, value in summary:
            fh.write(f"{key}\t{value}\n")
    print(f"best epoch {report.best_epoch} (val_acc {ckpt.metric:.4f}); "
          f"checkpoint {report.checkpoint_path}")
    return 0


def cmd_eval(cfg, args):
    out_dir = _out(args)
    p = prepare(cfg, out_dir)
    if args.kfold:
        return _eval_kfold(cfg, p, out_dir)
    if not args.checkpoint:
        raise AteError("eval needs --checkpoint (or --kfold)")
    ckpt = load_checkpoint(args.checkpoint)
    mc = ckpt.config
    if mc.n_classes != len(p.classes):
        raise AteError(f"checkpoint has {mc.n_classes} classes, dataset has {len(p.classes)}")
    idx = p.test_idx if len(p.test_idx) else p.val_idx
    split = "test" if len(p.test_idx) else "val"
    x = ((p.x[idx] - mc.input_mean) / mc.input_std).astype(np.float32)
    _, acc, probs = evaluate(mc, ckpt.params, x, p.y[idx])
    rows = [("split", split), ("n", len(idx)), ("accuracy", repr(acc))]
    print(f"accuracy\t{acc:.4f}\t({split}, n={len(idx)})")
    if len(p.classes) == 2:
        positive = p.classes.index(cfg.eval.positive_label) if cfg.eval.positive_label else 1
        curve = far_frr_curve(probs[:, positive], p.y[idx] == positive)
        far = far_at_fixed_frr(curve, cfg.eval.frr_target)
        os.makedirs(out_dir, exist_ok=True)
        write_curve(os.path.join(out_dir, "curve.tsv"), curve)
        rows.append((f"far_at_frr_{cfg.eval.frr_target}", repr(far)))
        print(f"FAR@FRR={cfg.eval.frr_target}\t{far:.4f}")
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_table(os.path.join(out_dir, "metrics.tsv"), rows)
    return 0


def _eval_kfold(cfg, p, out_dir):
    k = cfg.eval.k
    folds = [e.fold for e in p.entries]
    if all(f is not None for f in folds):
        folds = np.array(folds, dtype=np.int64)
    else:
        folds = assign_folds(len(p.entries), k, cfg.train.seed)
    mc = cfg.model.build(len(p.classes), p.x.shape[2], p.x.shape[3])
    result = kfold_cross_validate(p.x, p.y, folds, k,
                                  make_fold_runner(mc, cfg.train_config(), cfg.dataset.val_fraction))
    for i, acc in enumerate(result.accuracies):
        print(f"fold {i}\t{acc:.4f}")
    print(f"accuracy ({k}-fold)\t{result}")
    os.makedirs(out_dir, exist_ok=True)
    rows = [(f"fold_{i}", repr(a)) for i, a in enumerate(result.accuracies)]
    rows += [("mean", repr(result.mean)), ("std", repr(result.std)), ("summary", str(result))]
    write_metrics_table(os.path.join(out_dir, "metrics.tsv"), rows)
    return 0


def write_pgm(path, image):
    """ASCII portable graymap; ``image`` holds integers in [0, 255]."""
    h, w = image.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{w} {h}\n255\n")
        for row in image:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def _to_image(matrix, lo, hi):
    """(frames, mels) -> image with time left-to-right and low mels at the bottom."""
    if hi <= lo:
        img = np.full(matrix.shape, 128)
    else:
        img = np.clip(np.round((matrix - lo) / (hi - lo) * 255.0), 0, 255)
    return img.T[::-1].astype(np.int64)


def cmd_preview(cfg, args):
    out_dir = _out(args)
    if not args.checkpoint:
        raise AteError("preview needs --checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    mc = ckpt.config
    p = prepare(cfg, out_dir)
    stages = cfg.augment.build().stages or (AtePolicy(),)
    idx = p.train_idx[:args.n]
    x = ((p.x[idx] - mc.input_mean) / mc.input_std).astype(np.float32)
    labels = np.eye(mc.n_classes, dtype=np.float32)[p.y[idx]]
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng([cfg.train.seed, 3])
    for stage in stages:
        aug, _ = apply_stage(stage, x, labels, mc, ckpt.params, rng)
        for i, clip in enumerate(idx):
            orig = x[i, 0]
            new = aug[i, 0]
            delta = new.astype(np.float64) - orig.astype(np.float64)
            eps = getattr(stage, "epsilon", None)
            if eps is None:
                eps = float(np.abs(delta).max())
            stem = os.path.join(out_dir, f"{stage.name}_{p.entries[clip].clip_id}")
            lo, hi = float(min(orig.min(), new.min())), float(max(orig.max(), new.max()))
            write_pgm(stem + "_original.pgm", _to_image(orig, lo, hi))
            write_pgm(stem + "_augmented.pgm", _to_image(new, lo, hi))
            write_pgm(stem + "_delta.pgm", _to_image(delta, -eps, eps))
            np.save(stem + "_original.npy", orig)
            np.save(stem + "_delta.npy", delta)
            np.save(stem + "_augmented.npy", new)
        print(f"{stage.name}: wrote {len(idx)} triplets")
    return 0


def cmd_bench(cfg, args):
    out_dir = _out(args)
    p = prepare(cfg, out_dir)
    _, mc, norm = _normalized_splits(cfg, p)
    x_tr, y_tr = norm(p.train_idx), p.y[p.train_idx]
    x_va, y_va = norm(p.val_idx), p.y[p.val_idx]
    base = cfg.train_config()
    params = build_model(mc, base.seed)
    rows = []
    for names in BENCH_PIPELINES:
        stages = []
        for name in ([] if names == "none" else names.split(",")):
            stages.append(AtePolicy(**cfg.augment.params.get("ate", {})) if name == "ate"
                          else SpecAugmentPolicy(**cfg.augment.params.get(name, {})))
        tc = replace(base, epochs=args.epochs,
                     pipeline=AugmentationPipeline(tuple(stages), cfg.augment.p_aug))
        report, _ = train(x_tr, y_tr, x_va, y_va, mc, tc, params=params)
        seconds = float(np.mean([e.seconds for e in report.epochs]))
        rows.append((tc.pipeline.label(), tc.pipeline.describe(), seconds))
    print(f"{'pipeline':<24}{'seconds/epoch':>14}")
    for label, desc, sec in rows:
        print(f"{label + ' (' + desc + ')':<24}{sec:>13.1f}s")
    ratio = rows[2][2] / rows[0][2]
    print(f"ate/none ratio\t{ratio:.2f}")
    os.makedirs(out_dir, exist_ok=True)
    write_metrics_table(os.path.join(out_dir, "bench.tsv"),
                        [(label, repr(sec)) for label, _, sec in rows] + [("ate_over_none", repr(ratio))])
    return 0


COMMANDS = {"featurize": cmd_featurize, "train": cmd_train, "eval": cmd_eval,
            "preview": cmd_preview, "bench": cmd_bench}


def build_parser():
    parser = argparse.ArgumentParser(prog="ateaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, help="training seed (overrides the config)")
        sp.add_argument("--out", help="output / run directory")
        sp.add_argument("--pipeline", help="comma-separated stages, order-significant, or 'none'")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("eval", "preview"):
            sp.add_argument("--checkpoint", help="checkpoint file")
        if name == "eval":
            sp.add_argument("--kfold", action="store_true", help="k-fold cross-validation")
        if name == "preview":
            sp.add_argument("-n", type=int, default=4, help="number of clips")
        if name == "bench":
            sp.add_argument("--epochs", type=int, default=1, help="timed epochs per pipeline")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        apply_overrides(cfg, seed=args.seed, pipeline=args.pipeline)
        return COMMANDS[args.command](cfg, args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 2
    except (AteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
