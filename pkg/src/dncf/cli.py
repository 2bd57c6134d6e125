"""Command-line front end.

Subcommands: ``train``, ``eval``, ``pretrain-fuse``, ``sweep``, ``report``
and ``synth``. Flag values override config-file values, which override the
built-in defaults. Exit codes: 0 success, 1 usage/configuration error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import checkpoint as ckpt
from .data import load_dataset
from .errors import (ConfigError, DataError, FusionError, NumericError,
                     ProtocolError, ShapeError)
from .evaluate import evaluate
from .models import MODEL_KINDS, ModelSpec, build_model
from .nn import COMBINER_KINDS
from .report import plot_sweep, plot_training_curves
from .synthetic import generate_dataset
from .tensor import SeededRng
from .train import (SWEEP_AXES, RunConfig, pretrain_fuse, run_sweep,
                    train_model)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# CLI flag dest -> RunConfig field
_FLAG_TO_FIELD = {
    "train": "train_path", "test": "test_path", "negatives": "negatives_path",
    "model": "model", "factors": "factors", "layers": "layers",
    "combiner": "combiner", "dmlp_embed": "dmlp_embed",
    "attn_hidden": "attn_hidden", "mask_history_target": "mask_history_target",
    "neg": "neg_ratio", "epochs": "epochs", "batch": "batch_size",
    "lr": "lr", "l2": "l2", "seed": "seed", "optimizer": "optimizer",
    "eval_every": "eval_every", "patience": "patience",
    "checkpoint": "checkpoint_path", "metrics": "metrics_path",
    "deterministic": "deterministic", "k_max": "k_max",
    "val_negatives": "val_negatives", "use_validation": "use_validation",
}
_CONFIG_FIELDS = {f.name for f in dataclass_fields(RunConfig)}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_layers(text: str):
    text = text.strip()
    if text.lower() in ("", "0", "none"):
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --layers value {text!r}; expected comma-"
                          f"separated widths like 256,128,64") from None


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train", help="path to the *.train.rating file")
    p.add_argument("--test", help="path to the *.test.rating file")
    p.add_argument("--negatives", help="path to the *.test.negative file")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--factors", type=int, help="predictive factors / embedding width")
    p.add_argument("--layers", type=_parse_layers,
                   help="hidden widths, e.g. 256,128,64; 'none' for no hidden layers")
    p.add_argument("--combiner", choices=COMBINER_KINDS)
    p.add_argument("--dmlp-embed", type=int, dest="dmlp_embed",
                   help="embedding width of the MLP part of dnmf")
    p.add_argument("--attn-hidden", type=int, dest="attn_hidden")
    p.add_argument("--mask-history-target", action="store_true",
                   dest="mask_history_target",
                   help="exclude a training positive from its own history")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--neg", type=int, help="negatives sampled per positive")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--patience", type=int,
                   help="evaluations without improvement before stopping (0 disables)")
    p.add_argument("--checkpoint", help="path for the best-validation checkpoint")
    p.add_argument("--metrics", help="append-only JSON-lines metrics log")
    p.add_argument("--deterministic", action="store_true",
                   help="bitwise-reproducible outputs (timings logged as 0)")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--val-negatives", type=int, dest="val_negatives")
    p.add_argument("--no-validation", action="store_false", dest="use_validation",
                   help="train on the full training set without a holdout")
    p.add_argument("--config", help="JSON file with RunConfig fields")


def _build_config(args: argparse.Namespace, overrides: dict | None = None
                  ) -> RunConfig:
    values: dict = {}
    ns = vars(args)
    if ns.get("config") is not None:
        try:
            with open(ns["config"], "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"bad config file: {exc}") from None
        unknown = set(file_values) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(file_values.get("layers"), list):
            file_values["layers"] = tuple(file_values["layers"])
        values.update(file_values)
    for flag, field_name in _FLAG_TO_FIELD.items():
        if ns.get(flag) is not None:
            values[field_name] = ns[flag]
    if overrides:
        values.update(overrides)
    missing = [k for k in ("train_path", "test_path", "negatives_path")
               if not values.get(k)]
    if missing:
        raise ConfigError("missing dataset paths; pass --train/--test/--negatives")
    return RunConfig(**values)


def _print(obj) -> None:
    print(json.dumps(obj))


# -- subcommand handlers ------------------------------------------------


def _cmd_train(args) -> int:
    config = _build_config(args)
    result = train_model(config)
    _print({
        "best_epoch": result.best_epoch,
        "best_val_hr10": result.best_val_hr10,
        "epochs_run": result.epochs_run,
        "test_hr10": result.test_report.hr_at(min(10, config.k_max)),
        "test_ndcg10": result.test_report.ndcg_at(min(10, config.k_max)),
        "seconds": 0.0 if config.deterministic else round(result.seconds, 3),
    })
    return EXIT_OK


def _cmd_eval(args) -> int:
    if not (args.train and args.test and args.negatives):
        raise ConfigError("missing dataset paths; pass --train/--test/--negatives")
    store, instances = load_dataset(args.train, args.test, args.negatives)
    if args.checkpoint:
        model = ckpt.load_model(args.checkpoint)
    elif args.model:
        spec = ModelSpec(kind=args.model,
                         factors=args.factors if args.factors else 64,
                         mlp_layers=args.layers,
                         combiner=args.combiner or "sum",
                         dmlp_embed=args.dmlp_embed,
                         attn_hidden=args.attn_hidden)
        model = build_model(spec, store.num_users, store.num_items,
                            SeededRng(args.seed if args.seed is not None else 42))
    else:
        raise ConfigError("pass --checkpoint or --model (e.g. --model itempop)")
    model.attach(store)
    report = evaluate(model, instances,
                      k_max=args.k_max if args.k_max else 10)
    print(report.to_json_line(zero_seconds=bool(args.deterministic)))
    return EXIT_OK


def _cmd_pretrain_fuse(args) -> int:
    base = _build_config(args, overrides={"model": "dnmf"})
    if base.dmlp_embed not in (None, base.factors):
        raise ConfigError("pre-training requires the MLP part embedding width "
                          "to equal --factors")
    dgmf_cfg = RunConfig(**{**_cfg_dict(base), "model": "dgmf", "layers": None,
                            "checkpoint_path": None, "metrics_path": None,
                            "optimizer": "adam"})
    dmlp_cfg = RunConfig(**{**_cfg_dict(base), "model": "dmlp",
                            "checkpoint_path": None, "metrics_path": None,
                            "optimizer": "adam", "seed": base.seed + 1,
                            "combiner": "sum", "dmlp_embed": None})
    dnmf_cfg = RunConfig(**{**_cfg_dict(base), "optimizer": "sgd",
                            "lr": args.sgd_lr if args.sgd_lr else base.lr,
                            "seed": base.seed + 2})
    result = pretrain_fuse(dgmf_cfg, dmlp_cfg, dnmf_cfg)
    k = min(10, base.k_max)
    _print({
        "dgmf_test_hr10": result.dgmf.test_report.hr_at(k),
        "dmlp_test_hr10": result.dmlp.test_report.hr_at(k),
        "fused_val_hr10": (result.fused_val_report.hr_at(k)
                           if result.fused_val_report else None),
        "dnmf_best_epoch": result.dnmf.best_epoch,
        "dnmf_test_hr10": result.dnmf.test_report.hr_at(k),
        "dnmf_test_ndcg10": result.dnmf.test_report.ndcg_at(k),
    })
    return EXIT_OK


def _cfg_dict(config: RunConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in dataclass_fields(RunConfig)}


def _cmd_sweep(args) -> int:
    base = _build_config(args)
    axis = args.axis
    raw = args.values
    if axis == "layers":
        values = [_parse_layers(v) for v in raw.split(";")]
    elif axis in ("factors", "neg_ratio"):
        try:
            values = [int(v) for v in raw.split(",")]
        except ValueError:
            raise ConfigError(f"bad --values for axis {axis}: {raw!r}") from None
    elif axis == "combiner":
        values = [v.strip() for v in raw.split(",")]
        bad = [v for v in values if v not in COMBINER_KINDS]
        if bad:
            raise ConfigError(f"unknown combiner values: {bad}")
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    out_csv = args.out or "sweep.csv"
    rows = run_sweep(base, axis, values, csv_path=out_csv)
    figure = None
    if not args.no_figures:
        figure = plot_sweep(out_csv)
    _print({"csv": str(out_csv), "figure": str(figure) if figure else None,
            "rows": len(rows)})
    return EXIT_OK


def _cmd_report(args) -> int:
    if not args.metrics and not args.sweep:
        raise ConfigError("pass --metrics and/or --sweep")
    out_dir = Path(args.out_dir)
    made: list[str] = []
    if args.metrics:
        made += [str(p) for p in plot_training_curves(args.metrics, out_dir)]
    if args.sweep:
        out_dir.mkdir(parents=True, exist_ok=True)
        fig = plot_sweep(args.sweep, out_dir / (Path(args.sweep).stem + ".png"))
        if fig:
            made.append(str(fig))
    _print({"figures": made})
    return EXIT_OK


def _cmd_synth(args) -> int:
    paths = generate_dataset(args.out_dir, prefix=args.prefix,
                             num_users=args.users, num_items=args.items,
                             min_interactions=args.min_interactions,
                             max_interactions=args.max_interactions,
                             clusters=args.clusters, seed=args.seed,
                             num_negatives=args.num_negatives)
    _print({"train": str(paths.train), "test": str(paths.test),
            "negatives": str(paths.negatives)})
    return EXIT_OK


# -- parser wiring -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dncf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and report test metrics")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (or itempop) on the test split")
    _add_data_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--factors", type=int)
    p.add_argument("--layers", type=_parse_layers)
    p.add_argument("--combiner", choices=COMBINER_KINDS)
    p.add_argument("--dmlp-embed", type=int, dest="dmlp_embed")
    p.add_argument("--attn-hidden", type=int, dest="attn_hidden")
    p.add_argument("--seed", type=int)
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("pretrain-fuse",
                       help="pre-train dgmf and dmlp, fuse into dnmf, fine-tune with SGD")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--sgd-lr", type=float, dest="sgd_lr",
                   help="learning rate for the post-fusion SGD stage")
    p.set_defaults(handler=_cmd_pretrain_fuse)

    p = sub.add_parser("sweep", help="run one config axis over several values")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True,
                   help="comma-separated values; for layers, ';'-separated width lists")
    p.add_argument("--out", help="CSV output path (default sweep.csv)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering the sweep figure")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("report", help="render figures from metrics/sweep outputs")
    p.add_argument("--metrics", help="JSON-lines metrics log")
    p.add_argument("--sweep", help="sweep CSV")
    p.add_argument("--out-dir", default="figures", dest="out_dir")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("synth", help="write a synthetic dataset in the rating layout")
    p.add_argument("--out-dir", default="data/synth", dest="out_dir")
    p.add_argument("--prefix", default="synth")
    p.add_argument("--users", type=int, default=300)
    p.add_argument("--items", type=int, default=400)
    p.add_argument("--min-interactions", type=int, default=12, dest="min_interactions")
    p.add_argument("--max-interactions", type=int, default=30, dest="max_interactions")
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--num-negatives", type=int, default=99, dest="num_negatives")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(handler=_cmd_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except (ConfigError, ShapeError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
