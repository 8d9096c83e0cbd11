"""Command-line entry point: ``seqloc <subcommand> [flags]``.

Every subcommand also accepts ``--config FILE`` with ``key=value`` lines whose
keys are flag names (``knot-spacing`` or ``knot_spacing``); explicit flags
override file entries. Logging verbosity comes from ``SEQLOC_LOG``
(quiet, info or debug).
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .data import DatasetError, Sequence, SyntheticSceneConfig, load_dataset, read_trajectory_csv, \
    synth_generate, write_trajectory_csv
from .evaluation import evaluate, predict_sequence, sweep_window_lengths, write_all
from .features import ConvLayerSpec, ConvStackConfig
from .smoothing import SplineConfig, spline_smooth
from .training import CheckpointError, TrainConfig, TrainingDiverged, load_checkpoint, save_checkpoint, train

log = logging.getLogger("seqloc")

LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    pass


def _alias(text):
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alias must look like SRC:DST, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _shape(text):
    vals = _int_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected C,H,W, got {text!r}")
    return tuple(vals)


def _add_common(p):
    p.add_argument("--config", help="key=value file supplying defaults for any flag")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default: 0)")


def build_parser():
    parser = argparse.ArgumentParser(prog="seqloc", description="Video-clip 6-DoF relocalization toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene as train.csv / test.csv")
    _add_common(p)
    p.add_argument("--noise", type=float, default=0.3, help="observation noise std (default: 0.3)")
    p.add_argument("--alias", type=_alias, action="append", default=[],
                   help="SRC:DST frame pair; DST emits SRC's noiseless observation (repeatable)")
    p.add_argument("--dim", type=int, default=16, help="observation dimension D (default: 16)")
    p.add_argument("--train-frames", type=int, default=400, help="train sequence length (default: 400)")
    p.add_argument("--test-frames", type=int, default=200, help="test sequence length (default: 200)")
    p.add_argument("--period", type=float, default=200, help="frames per lap of the camera path (default: 200)")

    p = sub.add_parser("train", help="train a model, writing checkpoint.bin and train_log.csv")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory or trajectory CSV")
    p.add_argument("--window", type=int, default=20, help="clip length T (default: 20)")
    p.add_argument("--stride", type=int, default=None, help="clip stride (default: window)")
    p.add_argument("--hidden", type=int, default=64, help="LSTM hidden size H (default: 64)")
    p.add_argument("--alpha1", type=float, default=1.0, help="translation loss weight (default: 1)")
    p.add_argument("--alpha2", type=float, default=10.0, help="orientation loss weight (default: 10)")
    p.add_argument("--mode", choices=("point", "mdn"), default="point", help="output head (default: point)")
    p.add_argument("--components", type=int, default=3, help="mixture components in mdn mode (default: 3)")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default: 1e-3)")
    p.add_argument("--epochs", type=int, default=100, help="passes over the training clips (default: 100)")
    p.add_argument("--batch-size", type=int, default=8, help="clips per Adam step (default: 8)")
    p.add_argument("--clip-norm", type=float, default=5.0, help="global gradient-norm clip, 0 disables (default: 5)")
    p.add_argument("--unidirectional", action="store_true", help="forward-only LSTM instead of bidirectional")
    p.add_argument("--extractor", choices=("passthrough", "conv"), default="passthrough",
                   help="treat feature columns as precomputed features or as flattened images")
    p.add_argument("--image-shape", type=_shape, default=(1, 32, 32),
                   help="C,H,W of flattened frames for --extractor conv (default: 1,32,32)")

    p = sub.add_parser("predict", help="write per-frame predictions for every sequence")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    p.add_argument("--data", required=True, help="dataset directory or trajectory CSV")
    p.add_argument("--window", type=int, default=20, help="inference window length (default: 20)")

    p = sub.add_parser("eval", help="score a predicted trajectory against ground truth")
    _add_common(p)
    p.add_argument("--pred", required=True, help="predicted trajectory CSV")
    p.add_argument("--gt", required=True, help="ground-truth trajectory CSV")
    p.add_argument("--bin-width", type=float, default=0.1, help="histogram bin width in meters (default: 0.1)")

    p = sub.add_parser("smooth", help="spline-smooth a trajectory CSV")
    _add_common(p)
    p.add_argument("--data", required=True, help="trajectory CSV of per-frame estimates")
    p.add_argument("--gt", help="optional ground truth; writes raw/ and smoothed/ reports")
    p.add_argument("--degree", type=int, default=3, help="spline degree (default: 3)")
    p.add_argument("--knot-spacing", type=int, default=10, help="frames between knots (default: 10)")
    p.add_argument("--bin-width", type=float, default=0.1, help="histogram bin width in meters (default: 0.1)")

    p = sub.add_parser("sweep", help="median test error as a function of inference window length")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    p.add_argument("--data", required=True, help="dataset directory or trajectory CSV")
    p.add_argument("--lengths", type=_int_list, default=[1, 5, 10, 20, 50],
                   help="comma-separated window lengths (default: 1,5,10,20,50)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    _add_common(p)
    p.add_argument("--hidden", type=int, default=8, help="hidden size, at most 8 (default: 8)")
    p.add_argument("--dim", type=int, default=6, help="feature dimension, at most 6 (default: 6)")
    p.add_argument("--window", type=int, default=7, help="sequence length, at most 7 (default: 7)")
    p.add_argument("--components", type=int, default=3, help="mixture components (default: 3)")
    p.add_argument("--inject-fault", default=None, metavar="GROUP",
                   help="test hook: corrupt the analytic gradient of GROUP")
    parser.subcommands = sub.choices
    return parser


def _read_config_file(path):
    entries = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.replace("-", "_")] = value
    return entries


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in parser.subcommands:
        _apply_config_file(parser.subcommands[known.command], known.command, known.config)
    return parser.parse_args(argv)


def _apply_config_file(sub, command, path):
    """Install file entries as subcommand defaults so explicit flags still win."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in _read_config_file(path).items():
        if key not in actions:
            raise CliError(f"{path}: unknown key {key!r} for '{command}'")
        action = actions[key]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                defaults[key] = [action.type(v) for v in value.split()]
            else:
                defaults[key] = action.type(value) if action.type else value
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise CliError(f"{path}: bad value for {key!r}: {e}") from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise CliError(f"{path}: {key!r} must be one of {sorted(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)


def _out(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create output directory {out}: {e}") from None
    return out


def cmd_synth(args):
    config = SyntheticSceneConfig(n_train=args.train_frames, n_test=args.test_frames, period=args.period,
                                  feature_dim=args.dim, noise=args.noise, aliases=tuple(args.alias),
                                  seed=args.seed)
    out = _out(args)
    ds = synth_generate(config)
    for seq in ds.sequences:
        write_trajectory_csv(out / f"{seq.split}.csv", seq)
    log.info("wrote %s", ", ".join(str(out / f"{s.split}.csv") for s in ds.sequences))
    return 0


def cmd_train(args):
    ds = load_dataset(args.data, window=args.window, stride=args.stride)
    conv = None
    if args.extractor == "conv":
        conv = ConvStackConfig(args.image_shape, tuple(ConvLayerSpec(3, ch, 1, True) for ch in (8, 16, 32)))
    config = TrainConfig(window=args.window, stride=args.stride, batch_size=args.batch_size, epochs=args.epochs,
                         seed=args.seed, alpha1=args.alpha1, alpha2=args.alpha2, mode=args.mode,
                         components=args.components if args.mode == "mdn" else 1, hidden=args.hidden,
                         lr=args.lr, clip_norm=args.clip_norm or None, bidirectional=not args.unidirectional,
                         conv=conv)
    out = _out(args)

    def progress(epoch, loss):
        log.debug("epoch %d mean loss %.6g", epoch, loss)

    try:
        model, history = train(config, ds, on_epoch=progress)
    except TrainingDiverged as e:
        save_checkpoint(e.model, out / "checkpoint.bin", config)
        raise CliError(f"{e}; last good parameters saved to {out / 'checkpoint.bin'}") from None
    save_checkpoint(model, out / "checkpoint.bin", config)
    history.write_csv(out / "train_log.csv")
    print(f"final loss {history.iteration_loss[-1]:.6g} after {len(history.iteration_loss)} steps")
    return 0


def _predicted_sequence(model, seq, window):
    return Sequence(seq.name, seq.frames, predict_sequence(model, seq.features, window), None, seq.split)


def cmd_predict(args):
    model, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    out = _out(args)
    for seq in ds.sequences:
        if seq.features is None:
            raise CliError(f"sequence {seq.name} has no features to predict from")
        window = min(args.window, len(seq))
        write_trajectory_csv(out / f"pred_{seq.name}.csv", _predicted_sequence(model, seq, window))
    return 0


def cmd_eval(args):
    pred, _ = read_trajectory_csv(args.pred)
    gt, _ = read_trajectory_csv(args.gt)
    if not np.array_equal(pred.frames, gt.frames):
        raise CliError("predicted and ground-truth frame indices differ")
    report = evaluate(pred.poses, gt.poses, gt.frames)
    write_all(report, _out(args), args.bin_width)
    s = report.summary()
    print(f"median translation {s['translation_m']['median']:.6g} m, "
          f"median rotation {s['rotation_deg']['median']:.6g} deg over {report.count} frames")
    return 0


def cmd_smooth(args):
    seq, _ = read_trajectory_csv(args.data)
    config = SplineConfig(args.degree, args.knot_spacing)
    smoothed = spline_smooth(seq.poses, config)
    out = _out(args)
    write_trajectory_csv(out / "smoothed.csv", Sequence(seq.name, seq.frames, smoothed, None, seq.split))
    if args.gt:
        gt, _ = read_trajectory_csv(args.gt)
        write_all(evaluate(seq.poses, gt.poses, gt.frames), out / "raw", args.bin_width)
        write_all(evaluate(smoothed, gt.poses, gt.frames), out / "smoothed", args.bin_width)
    return 0


def cmd_sweep(args):
    model, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    result = sweep_window_lengths(model, ds, args.lengths)
    result.write_csv(_out(args) / "sweep.csv")
    for length, err in result.rows():
        print(f"window {length:4d}: median translation error {err:.6g}")
    for length in result.skipped:
        print(f"window {length:4d}: skipped (longer than every sequence)")
    return 0


def cmd_gradcheck(args):
    if args.hidden > 8 or args.window > 7 or args.dim > 6:
        raise CliError("gradcheck needs --hidden <= 8, --window <= 7 and --dim <= 6")
    seeds = (args.seed, args.seed + 1, args.seed + 2)
    worst = gradcheck.run_all(seeds, args.hidden, args.dim, args.window, args.components, args.inject_fault)
    if args.inject_fault and args.inject_fault not in worst:
        raise CliError(f"unknown gradient group {args.inject_fault!r}")
    failed = [g for g, e in worst.items() if not e < gradcheck.TOLERANCE]
    for group, err in worst.items():
        print(f"{group:24s} {err:.3e}  {'FAIL' if group in failed else 'ok'}")
    if failed:
        print(f"FAILED groups: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(worst)} groups below {gradcheck.TOLERANCE:g}")
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "smooth": cmd_smooth, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck}


def main(argv=None):
    level = os.environ.get("SEQLOC_LOG", "info").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (CliError, DatasetError, CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
