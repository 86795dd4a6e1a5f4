"""Command-line interface: gen, train, adapt, eval, delta, hhsw, gradcheck.

Exit codes: 0 success, 1 validation error, 2 numeric/convergence failure,
3 I/O error.  Every command that writes an output directory echoes the fully
resolved configuration (with the toolkit version) next to its artifacts, and
is reproducible from (config, seed).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .alignment import sliced_wasserstein
from .config import RunConfig, factor_classes
from .dataio import load_matrix, read_epoch_dataset, write_epoch_dataset, write_matrix
from .errors import DataFormatError, LorentzkitError, NumericError, ValidationError
from .geometry import manifold_defect
from .gradsuite import run_gradient_suite
from .hyperbolicity import delta_sampled
from .model import Heegnet, load_checkpoint, save_checkpoint
from .synth import gen_epochs
from .train import enumerate_folds, evaluate, fit, sfuda_adapt


def _fmt(x):
    return repr(float(x))


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("LORENTZKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"LORENTZKIT_THREADS={env!r} is not an integer") from exc
    return 1


def _resolve_config(args, extra_overrides=None):
    overrides = dict(extra_overrides or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
    return RunConfig.load(args.config, overrides)


def _prepare_out(args, allow_existing=True):
    if args.out is None:
        raise ValidationError("this command requires --out DIR")
    os.makedirs(args.out, exist_ok=True)
    if not allow_existing:
        existing = [f for f in os.listdir(args.out) if not f.startswith(".")]
        if existing and not args.force:
            raise ValidationError(f"output directory {args.out} is not empty (use --force)")
    return args.out


def _echo_config(cfg, out_dir):
    text = cfg.to_toml(header_comment=f"lorentzkit {__version__} resolved configuration")
    with open(os.path.join(out_dir, "resolved_config.toml"), "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args):
    overrides = {}
    if args.domains is not None:
        overrides["data.domains"] = args.domains
    if args.classes is not None:
        fam, var = factor_classes(args.classes)
        overrides["data.families"] = fam
        overrides["data.variants"] = var
    if args.per_cell is not None:
        overrides["data.per_cell"] = args.per_cell
    if args.channels is not None:
        overrides["data.channels"] = args.channels
    if args.times is not None:
        overrides["data.times"] = args.times
    if args.shift_strength is not None:
        overrides["data.shift_strength"] = args.shift_strength
    if args.snr is not None:
        overrides["data.snr"] = args.snr
    cfg = _resolve_config(args, overrides)
    out = _prepare_out(args, allow_existing=False)
    dataset = gen_epochs(
        n_domains=cfg["data.domains"],
        families=cfg["data.families"],
        variants=cfg["data.variants"],
        n_channels=cfg["data.channels"],
        n_times=cfg["data.times"],
        per_cell=cfg["data.per_cell"],
        snr=cfg["data.snr"],
        shift_strength=cfg["data.shift_strength"],
        seed=cfg["seed"],
        sampling_rate=cfg["data.sampling_rate"],
        gain_spread=cfg["data.gain_spread"],
        max_latency=cfg["data.max_latency"],
        sensor_noise=cfg["data.sensor_noise"],
    )
    write_epoch_dataset(dataset, out, force=True)
    _echo_config(cfg, out)
    manifest = cfg.to_toml(
        header_comment=(
            f"lorentzkit {__version__} dataset manifest\n"
            f"provenance = {dataset.provenance}\n"
            f"epochs = {len(dataset)}"
        )
    )
    with open(os.path.join(out, "manifest.toml"), "w", encoding="utf-8") as fh:
        fh.write(manifest)
    print(f"wrote {len(dataset)} epochs "
          f"({dataset.n_channels} channels x {dataset.n_times} samples) to {out}")
    return 0


def _fold_spec(dataset, cfg, fold_arg):
    folds = enumerate_folds(sorted(set(dataset.domains.tolist())), cfg["train.fold_policy"])
    if fold_arg == "all":
        return list(enumerate(folds))
    idx = int(fold_arg)
    if not 0 <= idx < len(folds):
        raise ValidationError(f"fold {idx} out of range (have {len(folds)})")
    return [(idx, folds[idx])]


def _train_one_fold(data_dir, cfg_values, fold_index, sources, targets, out_dir, seed):
    cfg = RunConfig(cfg_values)
    dataset = read_epoch_dataset(data_dir)
    mask = np.isin(dataset.domains, sources)
    model_cfg = cfg.model_config(
        dataset.n_channels, dataset.n_times, len(dataset.class_names), seed=seed
    )
    model = Heegnet(model_cfg)
    result = fit(
        model,
        dataset.epochs[mask], dataset.labels[mask], dataset.domains[mask],
        n_epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"], patience=cfg["train.patience"],
        val_fraction=cfg["train.val_fraction"], seed=seed,
    )
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(model, os.path.join(out_dir, "checkpoint.heeg"),
                    extra={"fold": fold_index, "targets": [int(t) for t in targets]})
    keys = sorted({k for row in result.history for k in row})
    lines = [",".join(keys)]
    for row in result.history:
        lines.append(",".join(_fmt(row[k]) if k != "epoch" else str(row[k]) for k in keys))
    with open(os.path.join(out_dir, "history.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return fold_index, result.best_epoch, result.best_score


def cmd_train(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args)
    dataset = read_epoch_dataset(args.data)
    jobs = _fold_spec(dataset, cfg, args.fold)
    seeds = np.random.SeedSequence(cfg["seed"]).spawn(
        max(j[0] for j in jobs) + 1
    )
    work = [
        (args.data, cfg.values, idx, sources, targets,
         os.path.join(out, f"fold_{idx}"), int(seeds[idx].generate_state(1)[0]))
        for idx, (sources, targets) in jobs
    ]
    threads = _threads(args)
    if threads > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_train_one_fold_star, work))
    else:
        results = [_train_one_fold_star(w) for w in work]
    _echo_config(cfg, out)
    for idx, best_epoch, best_score in sorted(results):
        print(f"fold {idx}: best epoch {best_epoch}, inner-val balanced accuracy {best_score:.4f}")
    return 0


def _train_one_fold_star(packed):
    return _train_one_fold(*packed)


def cmd_adapt(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args)
    dataset = read_epoch_dataset(args.data)
    model = load_checkpoint(args.checkpoint)
    if args.domains:
        targets = sorted(int(d) for d in args.domains.split(","))
    else:
        targets = sorted(set(dataset.domains.tolist()) - set(model.source_domains))
    if not targets:
        raise ValidationError("no target domains to adapt (all dataset domains are sources)")
    mask = np.isin(dataset.domains, targets)
    sfuda_adapt(
        model, dataset.epochs[mask], dataset.domains[mask],
        passes=cfg["train.adapt_passes"], batch_size=cfg["train.adapt_batch"],
    )
    path = os.path.join(out, "adapted.heeg")
    save_checkpoint(model, path, extra={"adapted_domains": [int(t) for t in targets]})
    _echo_config(cfg, out)
    print(f"adapted domains {targets} -> {path}")
    return 0


def cmd_eval(args):
    cfg = _resolve_config(args)
    out = _prepare_out(args)
    dataset = read_epoch_dataset(args.data)
    model = load_checkpoint(args.checkpoint)
    if args.domains:
        targets = sorted(int(d) for d in args.domains.split(","))
    else:
        targets = sorted(set(dataset.domains.tolist()) - set(model.source_domains))
        if not targets:
            targets = sorted(set(dataset.domains.tolist()))
    mask = np.isin(dataset.domains, targets)
    if not np.any(mask):
        raise ValidationError(f"no epochs for requested domains {targets}")
    result = evaluate(
        model, dataset.epochs[mask], dataset.labels[mask], dataset.domains[mask],
        batch_size=cfg["train.eval_batch"],
    )
    lines = ["domain,balanced_accuracy,unseen_stats_warning"]
    rows = [
        (str(d), score, d in result.unseen_domains)
        for d, score in sorted(result.per_domain.items())
    ]
    rows.append(("mean", result.balanced_accuracy, bool(result.unseen_domains)))
    header = f"{'domain':>8s} {'bal.acc':>9s} {'warn':>5s}"
    print(header)
    print("-" * len(header))
    for name, score, warn in rows:
        lines.append(f"{name},{_fmt(score)},{int(warn)}")
        print(f"{name:>8s} {score:9.4f} {'  * ' if warn else '    '}")
    if result.excluded_classes:
        print(f"note: classes absent from ground truth were excluded: {result.excluded_classes}")
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _echo_config(cfg, out)
    return 0


def _load_points(path, metric_flag):
    if os.path.isdir(path):
        dataset = read_epoch_dataset(path)
        pts = dataset.epochs.reshape(len(dataset), -1).astype(np.float64)
        return pts, "euclidean", -1.0
    arr, sidecar = load_matrix(path)
    metric = metric_flag
    curvature = -1.0
    if sidecar:
        if sidecar.get("model") == "lorentz" and metric_flag == "auto":
            metric = "lorentz"
        curvature = float(sidecar.get("curvature", -1.0))
    if metric == "auto":
        metric = "euclidean"
    return arr, metric, curvature


def cmd_delta(args):
    cfg = _resolve_config(args)
    pts, metric, curvature = _load_points(args.input, args.metric)
    report = delta_sampled(
        pts, metric=metric, curvature=curvature,
        batch=args.batch, batches=args.batches, seed=cfg["seed"],
    )
    print(f"points:    {pts.shape[0]} (sampled {report.sample_size} x {report.batches} batches, {metric} metric)")
    print(f"delta:     {report.delta:.6f} +- {report.delta_std:.6f}")
    print(f"diameter:  {report.diameter:.6f} +- {report.diameter_std:.6f}")
    print(f"delta_rel: {report.delta_rel:.6f} +- {report.delta_rel_std:.6f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "delta.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("delta,delta_std,diameter,diameter_std,delta_rel,delta_rel_std,sample_size,batches\n")
            fh.write(",".join([
                _fmt(report.delta), _fmt(report.delta_std), _fmt(report.diameter),
                _fmt(report.diameter_std), _fmt(report.delta_rel), _fmt(report.delta_rel_std),
                str(report.sample_size), str(report.batches),
            ]) + "\n")
        _echo_config(cfg, args.out)
    return 0


def cmd_hhsw(args):
    cfg = _resolve_config(args)
    a, sidecar_a = load_matrix(args.file_a)
    b, sidecar_b = load_matrix(args.file_b)
    curvature = -1.0
    for sc in (sidecar_a, sidecar_b):
        if sc and "curvature" in sc:
            curvature = float(sc["curvature"])
    if a.shape != b.shape:
        raise ValidationError(f"sample shapes differ: {a.shape} vs {b.shape}")
    for name, arr in (("first", a), ("second", b)):
        defect = manifold_defect(arr, curvature)
        bad = np.nonzero((defect > 1e-5) | (arr[:, 0] <= 0))[0]
        if bad.size:
            raise ValidationError(
                f"{name} file has off-manifold rows (tolerance 1e-5): {bad[:20].tolist()}"
            )
    value, per_slice = sliced_wasserstein(
        a, b, slices=args.slices, p=args.exponent,
        rng=np.random.default_rng(cfg["seed"]), k=curvature,
    )
    print(f"hhsw (S={args.slices}, p={args.exponent}): {float(value):.8f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_matrix(os.path.join(args.out, "hhsw_slices.csv"),
                     np.asarray(per_slice).reshape(-1, 1))
        with open(os.path.join(args.out, "hhsw.csv"), "w", encoding="utf-8") as fh:
            fh.write("hhsw,slices,exponent\n")
            fh.write(f"{_fmt(value)},{args.slices},{args.exponent}\n")
        _echo_config(cfg, args.out)
    return 0


def cmd_gradcheck(args):
    seeds = tuple(range(args.seeds))
    results = run_gradient_suite(seeds=seeds, tolerance=args.tolerance)
    width = max(len(r.name) for r in results)
    print(f"{'layer':<{width}s}  {'max rel err':>12s}  {'worst input':>16s}  status")
    all_pass = True
    for r in results:
        all_pass &= r.passed
        print(f"{r.name:<{width}s}  {r.max_rel_err:12.3e}  {r.worst_input:>16s}  "
              f"{'PASS' if r.passed else 'FAIL'}")
    if not all_pass:
        raise NumericError("gradient check failed for at least one layer")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML configuration file")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite non-empty outputs")
    common.add_argument("--threads", type=int, default=None,
                        help="parallel fold workers (env LORENTZKIT_THREADS)")
    parser = argparse.ArgumentParser(
        prog="lorentzkit",
        description="Hyperbolic deep learning toolkit on the Lorentz model",
    )
    parser.add_argument("--version", action="version", version=f"lorentzkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic epoch dataset")
    p.add_argument("--domains", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--per-cell", dest="per_cell", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--times", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--shift-strength", dest="shift_strength", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="fit on the source domains of a fold")
    p.add_argument("--data", required=True, help="epoch dataset directory")
    p.add_argument("--fold", default="0", help="fold index or 'all'")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("adapt", parents=[common], help="source-free adaptation to target domains")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--domains", default=None, help="comma-separated target domain ids")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", parents=[common], help="balanced accuracy per target domain")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--domains", default=None, help="comma-separated domain ids")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("delta", parents=[common], help="delta-hyperbolicity of an embedding/dataset")
    p.add_argument("--input", required=True, help="CSV matrix or dataset directory")
    p.add_argument("--metric", choices=("auto", "euclidean", "lorentz"), default="auto")
    p.add_argument("--batch", type=int, default=1500)
    p.add_argument("--batches", type=int, default=10)
    p.set_defaults(func=cmd_delta)

    p = sub.add_parser("hhsw", parents=[common],
                       help="sliced discrepancy between two on-manifold embeddings")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--slices", type=int, default=1000)
    p.add_argument("--exponent", type=int, default=2)
    p.set_defaults(func=cmd_hhsw)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference checks for every layer")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, LorentzkitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
