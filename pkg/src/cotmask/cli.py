"""Command-line entry point: ``cotmask <command> [options]``.

Options can also come from a ``key = value`` config file with one section per
command (``[train]``, ``[eval]``, ...) plus an optional ``[global]`` section.
Command-line flags override config values.  Exit status is 0 on success, 2
for usage/config errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import configparser
import os
import platform
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import ingest, plotting
from .core import BAND_NAMES, SplitRatios, split_dataset
from .errors import BadConfig, CotError, EmptyValidation
from .features import fit_normalizer
from .inference import run_inference, predict_raster
from .metrics import (
    PAPER_NOISE_LEVELS,
    accumulate_confusion,
    binary_f1_curve,
    calibrate_from_predictions,
    evaluate_regression,
    per_class_scores,
    segmentation_rows,
    three_class_f1_surface,
    threshold_grid,
    write_table_csv,
    write_thresholds,
    read_thresholds,
)
from .mlp import Model, TrainConfig, fit_linear_regression, init_mlp, load_ensemble, save_model, train_model
from .surrogate_rt import FAMILIES, PARTS, family_of_profile, generate_dataset
from .weak_finetune import LABELS, ThresholdSet, finetune, load_weak_csv


# --- argument helpers -----------------------------------------------------------

def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _paths(text):
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _add_globals(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="key = value config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0)
    p.add_argument("--out-dir", default=argparse.SUPPRESS if suppress else ".")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="cotmask", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_globals(p, suppress=True)
        return p

    p = command("generate", "simulate a labeled surrogate dataset")
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--out", default=None, help="CSV path (default <out-dir>/dataset.csv)")
    p.add_argument("--failed-fraction", type=float, default=0.0,
                   help="fraction of cloudy samples whose cloud is removed (COT 0, label kept)")
    p.add_argument("--no-cirrus", action="store_true", help="drop band B10")

    p = command("train", "train one MLP or an ensemble")
    p.add_argument("--data", required=False)
    p.add_argument("--column-map", default="", help="rename source columns, e.g. 'B2=b02,tau=cot'")
    p.add_argument("--split", type=_floats, default=[0.8, 0.1, 0.1])
    p.add_argument("--ensemble", type=int, default=1)
    p.add_argument("--updates", type=int, default=None)
    p.add_argument("--full-recipe", action="store_true", help="2,000,000 updates")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--noise", type=float, default=0.03, help="training noise level (fraction)")
    p.add_argument("--eval-every", type=int, default=5_000)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--linear-head", action="store_true", help="no ReLU on the output layer")
    p.add_argument("--no-cirrus", action="store_true")
    p.add_argument("--prefix", default="model")

    p = command("finetune", "refine models on weak clear/semi/opaque pixel labels")
    p.add_argument("--model", type=_paths, required=False)
    p.add_argument("--weak", required=False, help="weak-label pixel CSV")
    p.add_argument("--updates", type=int, default=10_000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--tau-semi", type=float, default=0.75)
    p.add_argument("--tau-opaque", type=float, default=1.25)
    p.add_argument("--prefix", default="tuned")

    p = command("eval", "MAE table over test-noise levels")
    p.add_argument("--model", type=_paths, required=False)
    p.add_argument("--data", required=False)
    p.add_argument("--column-map", default="")
    p.add_argument("--split", type=_floats, default=None,
                   help="evaluate on the test part of this split (same seed as training)")
    p.add_argument("--noise-levels", type=_floats, default=[100 * q for q in PAPER_NOISE_LEVELS],
                   help="percent")
    p.add_argument("--per-family", action="store_true")
    p.add_argument("--linreg", action="store_true", help="add a linear-regression column (needs --split)")
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = command("calibrate", "grid-search COT thresholds on labeled validation pixels")
    p.add_argument("--model", type=_paths, required=False)
    p.add_argument("--val", required=False, help="weak-label pixel CSV")
    p.add_argument("--mode", choices=("three_class", "binary"), default="three_class")
    p.add_argument("--grid", type=_floats, default=[0.0, 50.0, 0.25])
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")

    p = command("infer", "COT map, cloud mask and image verdict for one raster")
    p.add_argument("--model", type=_paths, required=False)
    p.add_argument("--raster", required=False)
    p.add_argument("--m", type=int, default=2, help="smoothing window size")
    p.add_argument("--no-smooth", action="store_true")
    p.add_argument("--smooth-after", action="store_true", help="threshold first, then smooth labels")
    p.add_argument("--tau-semi", type=float, default=0.75)
    p.add_argument("--tau-opaque", type=float, default=1.25)
    p.add_argument("--thresholds", default=None, help="file written by `calibrate`")
    p.add_argument("--truth", default=None, help="ground-truth class mask (PGM) to score against")
    p.add_argument("--prefix", default="infer")
    p.add_argument("--no-figures", action="store_true")

    p = command("benchmark", "time per-pixel inference on 128x128 rasters")
    p.add_argument("--model", type=_paths, default=None, help="omit to time a freshly initialised MLP-5")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--ensemble", type=int, default=1, help="replicate the model n times")
    p.add_argument("--out", default=None)
    return parser


def _apply_config(parser, argv):
    """Parse twice: once to find --config and the command, then with file values as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = configparser.ConfigParser()
    try:
        with open(args.config) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise BadConfig(f"cannot read config {args.config}: {exc}") from exc
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    values = {}
    for section in ("global", args.command):
        if cfg.has_section(section):
            values.update({k.replace("-", "_"): v for k, v in cfg.items(section)})
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise BadConfig(f"unknown config key {key!r} for command {args.command!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
    sub.set_defaults(**defaults)
    parser.set_defaults(**{k: v for k, v in defaults.items() if k in ("seed", "out_dir", "quiet")})
    return parser.parse_args(argv)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, [], ""):
            raise BadConfig(f"--{name.replace('_', '-')} is required for `{args.command}`")


def _existing(path):
    if not Path(path).exists():
        raise BadConfig(f"no such file: {path}")
    return path


def _out(args, name):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _load_dataset(args):
    d = ingest.load_dataset_csv(_existing(args.data), ingest.parse_column_map(args.column_map))
    if getattr(args, "no_cirrus", False):
        d = d.without_cirrus()
    return d


def _load_models(args):
    return load_ensemble([_existing(p) for p in args.model])


# --- commands ---------------------------------------------------------------------

def cmd_generate(args):
    d = generate_dataset(args.n, args.seed, args.failed_fraction)
    if args.no_cirrus:
        d = d.without_cirrus()
    path = Path(args.out) if args.out else _out(args, "dataset.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    ingest.save_dataset_csv(d, path)
    _say(args, f"wrote {len(d)} samples to {path}")
    for c, part in enumerate(PARTS):
        _say(args, f"  part {part:<6} {int((d.cloud_type == c).sum()):>8}")
    families = [family_of_profile(s) for s in d.surface_id]
    for fam in FAMILIES:
        n = families.count(fam)
        _say(args, f"  surface {fam:<30} {n:>8}  ({100 * n / len(d):.1f}%)")
    return 0


def cmd_train(args):
    _require(args, "data")
    d = _load_dataset(args)
    ratios = SplitRatios(*args.split) if len(args.split) == 3 else None
    if ratios is None:
        raise BadConfig("--split needs three comma-separated fractions")
    train_set, val_set, _ = split_dataset(d, ratios, args.seed)
    updates = 2_000_000 if args.full_recipe else (args.updates if args.updates is not None else 100_000)
    nz = fit_normalizer(train_set, args.noise)
    histories = []
    for k in range(args.ensemble):
        cfg = TrainConfig(
            batch_size=args.batch_size, num_updates=updates, learning_rate=args.lr, noise_level=args.noise,
            seed=args.seed + k, eval_every=args.eval_every, hidden_dim=args.hidden, num_layers=args.layers,
            relu_output=not args.linear_head,
        )
        model, history = train_model(train_set, val_set, cfg, nz)
        path = _out(args, f"{args.prefix}_{k}.cotmlp")
        save_model(path, model)
        rows = [[r["step"], r["train_loss"], r.get("val_mae", float("nan"))] for r in history.rows]
        write_table_csv(_out(args, f"{args.prefix}_{k}_history.csv"), ["step", "train_loss", "val_mae"], rows)
        histories.append(history.rows)
        best = f", best val MAE {history.best_val_mae:.4f} at step {history.best_step}" if history.best_step is not None else ""
        _say(args, f"wrote {path} (final val MAE {history.rows[-1].get('val_mae', float('nan')):.4f}{best})")
    plotting.plot_history(histories, _out(args, f"{args.prefix}_history.png"))
    return 0


def cmd_finetune(args):
    _require(args, "model", "weak")
    model = _load_models(args)
    weak = load_weak_csv(_existing(args.weak))
    t = ThresholdSet(args.tau_semi, args.tau_opaque)
    members = model.members if hasattr(model, "members") else [model]
    for k, member in enumerate(members):
        cfg = TrainConfig(batch_size=args.batch_size, num_updates=args.updates, learning_rate=args.lr,
                          noise_level=0.0, seed=args.seed + k)
        tuned = finetune(member, weak, t, cfg)
        path = _out(args, f"{args.prefix}_{k}.cotmlp")
        save_model(path, tuned)
        _say(args, f"wrote {path}")
    return 0


def cmd_eval(args):
    _require(args, "model", "data")
    model = _load_models(args)
    d = _load_dataset(args)
    if model.band_names != d.band_names and len(model.band_names) == 11:
        d = d.without_cirrus()
    train_set = None
    if args.split:
        train_set, _, test = split_dataset(d, SplitRatios(*args.split), args.seed)
    else:
        test = d
    levels = [q / 100 for q in args.noise_levels]
    name = "MLP-5" if not hasattr(model, "members") else f"MLP-5-ens-{len(model)}"
    tables = {name: evaluate_regression(model, test, levels, args.seed, args.per_family)}
    if args.linreg:
        if train_set is None:
            raise BadConfig("--linreg needs --split to know the training part")
        lin = fit_linear_regression(train_set, model.normalizer)
        tables["Lin-reg"] = evaluate_regression(lin, test, levels, args.seed, args.per_family)
    names = list(tables)
    rows = [[label] + [tables[n].rows()[i][1] for n in names] for i, (label, _) in enumerate(tables[name].rows())]
    path = Path(args.out) if args.out else _out(args, "eval.csv")
    write_table_csv(path, ["dataset"] + names, rows)
    for row in rows:
        _say(args, "  " + "  ".join([f"{row[0]:<28}"] + [f"{v:8.4f}" for v in row[1:]]))
    if not args.no_figures:
        plotting.plot_noise_curves(tables, path.with_suffix(".png"))
    return 0


def cmd_calibrate(args):
    _require(args, "model", "val")
    model = _load_models(args)
    val = load_weak_csv(_existing(args.val))
    if len(val) == 0:
        raise EmptyValidation("validation file has no pixels")
    if len(args.grid) != 3:
        raise BadConfig("--grid needs lo,hi,step")
    pred = model.predict(val.bands)
    cal = calibrate_from_predictions(pred, val.labels, tuple(args.grid), args.mode)
    path = Path(args.out) if args.out else _out(args, "thresholds.txt")
    write_thresholds(path, cal)
    t = cal.thresholds
    if args.mode == "binary":
        _say(args, f"tau_binary = {t.tau_binary}  macro F1 = {cal.objective:.4f}")
    else:
        _say(args, f"tau_semi = {t.tau_semi}  tau_opaque = {t.tau_opaque}  macro F1 = {cal.objective:.4f}")
    if not args.no_figures:
        grid = threshold_grid(*args.grid)
        if args.mode == "binary":
            scores = binary_f1_curve(pred, val.labels != 0, grid)
        else:
            scores = three_class_f1_surface(pred, val.labels, grid)
        plotting.plot_threshold_search(grid, scores, t, path.with_suffix(".png"), args.mode)
    return 0


def cmd_infer(args):
    _require(args, "model", "raster")
    t = read_thresholds(args.thresholds) if args.thresholds else ThresholdSet(args.tau_semi, args.tau_opaque)
    model = _load_models(args)
    img = ingest.load_raster(_existing(args.raster))
    data = img.data
    if img.channels == 12 and model.input_dim == 11:
        data = np.delete(data, BAND_NAMES.index("b10"), axis=2)
    res = run_inference(model, data, t, args.m, smooth=not args.no_smooth, smooth_first=not args.smooth_after)
    ingest.save_cot_map(res.smoothed, _out(args, f"{args.prefix}_cot.cotraster"))
    ingest.write_class_mask(res.mask, _out(args, f"{args.prefix}_mask.pgm"))
    _out(args, f"{args.prefix}_verdict.txt").write_text(res.verdict + "\n")
    if args.truth:
        truth = ingest.read_class_mask(_existing(args.truth))
        scores = per_class_scores(accumulate_confusion(res.mask, truth, 3))
        write_table_csv(_out(args, f"{args.prefix}_scores.csv"), ["metric", "value"],
                        segmentation_rows(scores, LABELS))
        _say(args, f"macro F1 {scores.macro_f1:.4f}  mIoU {scores.miou:.4f}")
    if not args.no_figures:
        plotting.plot_inference(data, model.band_names, res.smoothed, res.mask,
                                _out(args, f"{args.prefix}.png"), res.verdict)
    _say(args, f"verdict: {res.verdict}")
    return 0


def hardware_note():
    return (f"{platform.machine()} {platform.processor() or 'cpu'}, {os.cpu_count()} logical cores, "
            f"python {platform.python_version()}, numpy {np.__version__}")


def benchmark(model, size=128, repeats=10, seed=0):
    """Median seconds per ``size x size`` image over ``repeats`` warm runs."""
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.0, 0.6, size=(size, size, model.input_dim)).astype(np.float32)
    predict_raster(model, img)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict_raster(model, img)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cmd_benchmark(args):
    from .features import Normalizer
    from .mlp import Ensemble

    if args.model:
        model = _load_models(args)
    else:
        nz = Normalizer(np.zeros(12), np.ones(12), np.ones(12))
        model = Model(init_mlp(12, seed=args.seed), nz, BAND_NAMES)
    if args.ensemble > 1:
        members = model.members if hasattr(model, "members") else [model]
        model = Ensemble(members * args.ensemble)
    median = benchmark(model, args.size, max(args.repeats, 1), args.seed)
    n = len(model) if hasattr(model, "members") else 1
    note = hardware_note()
    path = Path(args.out) if args.out else _out(args, "benchmark.csv")
    write_table_csv(path, ["members", "size", "repeats", "median_seconds_per_image", "hardware"],
                    [[n, args.size, args.repeats, median, note]])
    _say(args, f"{n} model(s), {args.size}x{args.size}: {median:.4f} s/image (median of {args.repeats}) on {note}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "calibrate": cmd_calibrate,
    "infer": cmd_infer,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except CotError as exc:
        print(f"cotmask: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"cotmask: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"cotmask: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
