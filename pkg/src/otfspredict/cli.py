"""Command-line entry point: ``python -m otfspredict <command> [flags]``.

Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import harness
from .baselines import DLinear, LinearTrend, MovingAverage, RepeatLast, TimeLinear
from .channel import MobilityProfile, eva_profile, generate_sequence, sparsity_report
from .dataset import load_dataset, normalize, save_dataset, split_dataset
from .errors import FormatError, NumericalError
from .ldformer import LDformer, LdformerConfig, train
from .otfs import OtfsDims

MODELS = ["ldformer", "repeat-last", "linear-trend", "moving-average", "time-linear", "dlinear"]
STATELESS = {"repeat-last": RepeatLast, "linear-trend": LinearTrend, "moving-average": MovingAverage}

EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


# key=value files ---------------------------------------------------------


def read_kv(path) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def write_kv(path, values: dict):
    lines = []
    for k, v in values.items():
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _sidecar(ckpt) -> Path:
    return Path(str(ckpt) + ".cfg")


def _ldformer_config(values: dict[str, str]) -> LdformerConfig:
    kw = {}
    for f in dataclasses.fields(LdformerConfig):
        if f.name not in values:
            continue
        v = values[f.name]
        if f.name == "channels":
            kw[f.name] = tuple(int(x) for x in v.split(","))
        elif f.name == "dtype":
            kw[f.name] = v
        elif f.name in ("lr", "out_init_scale"):
            kw[f.name] = float(v)
        elif v == "None":
            kw[f.name] = None
        else:
            kw[f.name] = int(v)
    return LdformerConfig(**kw)


def save_model(model, path, norm_scale: float):
    """Write a trained predictor's checkpoint plus the ``.cfg`` description :func:`load_predictor` reads."""
    if model.kind == "ldformer":
        meta = {"kind": "ldformer", **dataclasses.asdict(model.cfg)}
    elif model.kind == "dlinear":
        meta = {"kind": "dlinear", "history_len": model.history_len, "entries": model.entries, "kernel": model.kernel}
    elif model.kind == "time-linear":
        meta = {"kind": "time-linear", "history_len": model.history_len, "hidden": model.hidden}
    else:
        raise UsageError(f"{model.kind} has no parameters to save")
    meta["norm_scale"] = repr(float(norm_scale))
    model.save(path)
    write_kv(_sidecar(path), meta)


def load_predictor(ckpt):
    """Rebuild a trained predictor from its checkpoint and ``.cfg`` sidecar; returns (model, norm_scale)."""
    side = _sidecar(ckpt)
    if not side.exists():
        raise UsageError(f"missing model description {side}")
    meta = read_kv(side)
    kind = meta.get("kind")
    scale = float(meta.get("norm_scale", 1.0))
    if kind == "ldformer":
        return LDformer.load(ckpt, _ldformer_config(meta)), scale
    if kind == "dlinear":
        return DLinear(int(meta["history_len"]), int(meta["entries"]), int(meta["kernel"])).load(ckpt), scale
    if kind == "time-linear":
        return TimeLinear(int(meta["history_len"]), int(meta["hidden"])).load(ckpt), scale
    raise UsageError(f"{side}: unknown model kind {kind!r}")


# shared plumbing ---------------------------------------------------------


def _dims(args) -> OtfsDims:
    return OtfsDims(args.m, args.n)


def _sequence(args):
    if args.data:
        return load_dataset(args.data)
    return generate_sequence(_dims(args), MobilityProfile(args.speed_kmh, args.fc_hz), eva_profile(), args.frames, args.seed)


def _split(args, horizon: int = 1):
    seq = _sequence(args)
    split = normalize(split_dataset(seq, history_len=args.history, horizon=horizon))
    return seq, split


def _predictor(args, history_len: int):
    if args.model in STATELESS:
        return STATELESS[args.model](), None
    if not args.ckpt:
        raise UsageError(f"--ckpt is required for model {args.model!r}")
    model, scale = load_predictor(args.ckpt)
    if model.kind != args.model:
        raise UsageError(f"{args.ckpt} holds a {model.kind} model, not {args.model}")
    return model, scale


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


# commands ----------------------------------------------------------------


def cmd_gen(args):
    if not args.out:
        raise UsageError("gen needs --out")
    seq = generate_sequence(_dims(args), MobilityProfile(args.speed_kmh, args.fc_hz), eva_profile(), args.frames, args.seed)
    save_dataset(args.out, seq)
    print(f"wrote {len(seq)} frames of {seq.dims.size}x{seq.dims.size} to {args.out}")


def cmd_diag(args):
    rep = sparsity_report(_sequence(args))
    s = rep.summary()
    text = "metric,value\n" + "".join(f"{k},{v:.6g}\n" for k, v in s.items())
    _emit(text, args.csv)


def cmd_train(args):
    if args.model in STATELESS:
        print(f"{args.model} has no parameters; nothing to train")
        return
    if not args.out:
        raise UsageError("train needs --out for the checkpoint")
    seq, split = _split(args)
    log = print if args.verbose else None
    if args.model == "ldformer":
        base = {**args.extra, "m": str(seq.dims.m), "n": str(seq.dims.n), "history_len": str(args.history)}
        base.update(max_epochs=str(args.epochs), lr=str(args.lr), batch=str(args.batch), seed=str(args.seed))
        cfg = _ldformer_config(base)
        model, rep = train(split, cfg, log=log)
        print(f"trained ldformer: {rep.stopped_epoch} epochs, best val {rep.best_val:.6g} at epoch {rep.best_epoch}, {rep.seconds:.1f} s")
    else:
        entries = 2 * seq.dims.size ** 2
        if args.model == "dlinear":
            model = DLinear(args.history, entries, int(args.extra.get("kernel", 5)), seed=args.seed)
        else:
            model = TimeLinear(args.history, int(args.extra.get("hidden", 32)), seed=args.seed)
        model.fit(split, epochs=args.epochs, lr=args.lr, batch=args.batch, log=log)
        print(f"trained {args.model}: {len(model.history['val'])} epochs, best val {min(model.history['val']):.6g}")
    save_model(model, args.out, split.norm_scale)


def cmd_eval(args):
    model, scale = _predictor(args, args.history)
    seq, split = _split(args, horizon=args.horizon)
    test = split.test if scale is None else split.test.scaled(split.norm_scale / scale)
    scale = split.norm_scale if scale is None else scale
    rep = harness.evaluate(model, test, args.horizon, dims=seq.dims, norm_scale=scale)
    harness.check_disjoint(rep, split.train, split.val)
    _emit(harness.write_csv([rep]), args.csv)


def _trained_models(args):
    out = []
    for path in args.ckpt_list:
        model, scale = load_predictor(path)
        out.append((model, scale))
    return out


def _lengths(text: str | None, top: int) -> list[int]:
    if text:
        return [int(x) for x in text.split(",")]
    return list(range(1, top + 1))


def cmd_sweep_history(args):
    seq, split = _split(args)
    preds, scale = [RepeatLast(), LinearTrend(), MovingAverage()], split.norm_scale
    for model, s in _trained_models(args):
        if model.kind != "ldformer":
            raise UsageError("history sweeps need a variable-length model (ldformer)")
        preds.append(model)
        scale = s
    test = split.test.scaled(split.norm_scale / scale)
    res = harness.sweep_history(preds, test, _lengths(args.points, args.history), dims=seq.dims, norm_scale=scale)
    _emit(harness.write_csv(res.reports), args.csv)


def cmd_sweep_horizon(args):
    seq, split = _split(args, horizon=args.horizon)
    models = _trained_models(args)
    if not models:
        raise UsageError("sweep-horizon needs at least one --ckpt")
    scale = models[0][1]
    test = split.test.scaled(split.norm_scale / scale)
    res = harness.sweep_horizon([m for m, _ in models], test, _lengths(args.points, args.horizon), dims=seq.dims, norm_scale=scale)
    _emit(harness.write_csv(res.reports), args.csv)


def cmd_sweep_speed(args):
    models = _trained_models(args)
    if not models:
        raise UsageError("sweep-speed needs at least one --ckpt")
    speeds = [float(x) for x in (args.points or "100,300,500").split(",")]
    scale = models[0][1]
    preds = [m for m, _ in models] + [RepeatLast()]
    res = harness.sweep_speed(preds, speeds, dims=_dims(args), norm_scale=scale, history_len=args.history,
                              frames=args.frames, seed=args.seed, carrier_hz=args.fc_hz)
    _emit(harness.write_csv(res.reports, axis="speed_kmh", values=res.values), args.csv)


def cmd_bench(args):
    side = args.m * args.n
    history = np.random.default_rng(args.seed).standard_normal((args.history, 2, side, side)) * 0.1
    preds = [RepeatLast(), LinearTrend(), MovingAverage()] + [m for m, _ in _trained_models(args)]
    rows = harness.bench(preds, history, warmup=10, runs=args.runs)
    _emit(harness.write_csv(rows), args.csv)


COMMANDS = {
    "gen": cmd_gen,
    "diag": cmd_diag,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-history": cmd_sweep_history,
    "sweep-horizon": cmd_sweep_horizon,
    "sweep-speed": cmd_sweep_speed,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--m", type=int, default=16, help="subcarriers")
    a("--n", type=int, default=4, help="symbols per frame")
    a("--speed-kmh", type=float, default=500.0)
    a("--fc-hz", type=float, default=2.5e9)
    a("--frames", type=int, default=1500)
    a("--seed", type=int, default=0)
    a("--data", help="dataset file (generated from the flags above when omitted)")
    a("--model", choices=MODELS, default="ldformer")
    a("--ckpt", dest="ckpt_list", action="append", default=[], help="trained checkpoint (repeatable)")
    a("--history", type=int, default=10)
    a("--horizon", type=int, default=1)
    a("--epochs", type=int, default=60)
    a("--lr", type=float, default=1e-3)
    a("--batch", type=int, default=8)
    a("--out", help="output file (dataset for gen, checkpoint for train)")
    a("--csv", help="also write the CSV output here")
    a("--config", help="key=value file supplying defaults for any flag or model setting")
    a("--points", help="comma-separated sweep axis values")
    a("--runs", type=int, default=100, help="timed runs per model for bench")
    a("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="otfspredict", description="DD-domain OTFS channel prediction experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {name: sub.add_parser(name, parents=[common]) for name in COMMANDS}
    return parser


def parse_args(argv):
    """Parse flags; a ``--config`` file becomes defaults that explicit flags override.

    Config keys that are not flags (``channels``, ``kernel``, ``hidden``, ...)
    are kept in ``args.extra`` for the model builders.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    args.extra = {}
    if args.config:
        values = read_kv(args.config)
        sp = parser.commands[args.command]
        defaults = {}
        for act in sp._actions:
            if act.dest in values and act.dest not in ("help", "config"):
                raw = values.pop(act.dest)
                try:
                    if act.dest == "ckpt_list":
                        defaults[act.dest] = raw.split(",")
                    elif isinstance(act, argparse._StoreTrueAction):
                        defaults[act.dest] = raw.lower() in ("1", "true", "yes")
                    else:
                        defaults[act.dest] = (act.type or str)(raw)
                except ValueError as e:
                    raise UsageError(f"{args.config}: bad value for {act.dest}: {raw!r}") from e
                if act.choices is not None and defaults[act.dest] not in act.choices:
                    raise UsageError(f"{args.config}: {act.dest} must be one of {list(act.choices)}")
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
        args.extra = values
    args.ckpt = args.ckpt_list[0] if args.ckpt_list else None
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return 0
