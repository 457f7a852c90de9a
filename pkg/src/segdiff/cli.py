"""``segdiff`` command line: synth | train | eval | ablate | render | config.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import metrics
from .config import ABLATION_FLAGS, CONFIG_SCHEMA, VARIANTS, RunConfig
from .netseg import checkpoint
from .netseg.model import SegDiffModel
from .netseg.training import Adam, TrainingError, fit, predict
from .numkit import ConfigurationError, ContractError, DimensionError, NumericError
from .render import render_many
from .synthdata import FormatError, ScenarioConfig, load_manifest, load_split, write_dataset
from .synthdata.formats import read_labels, write_labels

log = logging.getLogger("segdiff")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

LOG_SCHEMA = {
    "type": "object",
    "required": ["step", "epoch", "loss", "wall_ms"],
    "additionalProperties": False,
    "properties": {
        "step": {"type": "integer", "minimum": 0},
        "epoch": {"type": "integer", "minimum": 0},
        "loss": {"type": "number"},
        "wall_ms": {"type": "number", "minimum": 0},
    },
}

CKPT_NAME = "model.sdm"
LOG_NAME = "train_log.jsonl"


# ---- helpers ---------------------------------------------------------------

def _manifest(path):
    if not path:
        raise ConfigurationError("no manifest given (set 'manifest' in the config or pass --manifest)")
    try:
        return load_manifest(path)
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest is not valid JSON ({e})", None, path) from None


def _split(manifest, name):
    rows = load_split(manifest, name)
    if not rows:
        raise ContractError(f"split {name!r} is empty")
    return rows


def _as_training(rows):
    return [(h, p, y) for _, h, p, y in rows]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def evaluate_rows(model, rows, workers):
    preds = predict(model, [(h, p) for _, h, p, _ in rows], workers)
    report = metrics.evaluate(preds, [y for *_, y in rows], [r[0] for r in rows])
    return report, preds


def run_training(cfg, resume=None):
    """Train per ``cfg`` and write checkpoint, log and validation metrics to ``cfg.out_dir``."""
    manifest = _manifest(cfg.manifest)
    train = _as_training(_split(manifest, "train"))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / CKPT_NAME
    start_epoch = 0
    if resume:
        model, header, opt = checkpoint.load_checkpoint(resume, with_optimizer=True)
        if opt is None:
            raise FormatError("optimizer sidecar missing", None, str(resume) + ".opt.npz")
        # the architecture comes from the checkpoint; the run length may be extended
        model.cfg = replace(model.cfg, epochs=cfg.epochs, out_dir=cfg.out_dir,
                            checkpoint_every=cfg.checkpoint_every, workers=cfg.workers)
        start_epoch = int(header["train_state"].get("epoch", 0))
        log_mode = "a"
    else:
        model = SegDiffModel(cfg, train[0][0].shape[1], train[0][2].shape[1])
        opt = Adam.from_config(cfg)
        log_mode = "w"
    every = model.cfg.checkpoint_every
    with open(out / LOG_NAME, log_mode) as log_fh:
        def on_step(rec):
            log_fh.write(json.dumps(rec) + "\n")

        def on_epoch(epoch, optimizer):
            if every and (epoch + 1) % every == 0:
                checkpoint.save_checkpoint(ckpt_path, model, {"epoch": epoch + 1, "step": optimizer.t},
                                           optimizer)

        fit(model, train, opt, start_epoch, on_step, on_epoch)
    checkpoint.save_checkpoint(ckpt_path, model, {"epoch": model.cfg.epochs, "step": opt.t}, opt)
    val = load_split(manifest, "val")
    report = None
    if val:
        report, _ = evaluate_rows(model, val, model.cfg.workers)
        _write_json(out / "val_metrics.json", report.to_dict())
    return model, report


# ---- subcommands -----------------------------------------------------------

def cmd_synth(args):
    weights = None
    if args.mixing_weights:
        weights = [float(w) for w in args.mixing_weights.split(",")]
    sc = ScenarioConfig(persons=args.persons, classes=args.classes, frames=args.frames,
                        p_stay=args.p_stay, cooccurrence=args.cooccurrence, p_absent=args.p_absent,
                        feature_dim=args.feature_dim, snr=args.snr, mixing_weights=weights,
                        families=args.families, seed=args.seed)
    sc.validate()
    path = write_dataset(args.out, sc, args.samples, args.split)
    print(path)
    return EXIT_OK


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    updates = {}
    if getattr(args, "manifest", None):
        updates["manifest"] = args.manifest
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    if getattr(args, "epochs", None) is not None:
        updates["epochs"] = args.epochs
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    return replace(cfg, **updates).validate()


def cmd_train(args):
    cfg = _load_config(args)
    _, report = run_training(cfg, args.resume)
    if report is not None:
        print(json.dumps(report.headline(), sort_keys=True))
    return EXIT_OK


def cmd_eval(args):
    if args.predictions:
        # score existing SDL1 predictions named <id>_pred.sdl instead of running a model
        rows = _split(_manifest(args.manifest), args.split)
        preds = [read_labels(Path(args.predictions) / f"{r[0]}_pred.sdl") for r in rows]
        report = metrics.evaluate(preds, [r[3] for r in rows], [r[0] for r in rows])
    else:
        if not args.checkpoint:
            raise ConfigurationError("eval needs a checkpoint or --predictions")
        model, _ = checkpoint.load_checkpoint(args.checkpoint)
        if args.seed is not None:
            model.cfg = replace(model.cfg, seed=args.seed)
        manifest = _manifest(args.manifest or model.cfg.manifest)
        rows = _split(manifest, args.split)
        workers = args.workers if args.workers is not None else model.cfg.workers
        report, preds = evaluate_rows(model, rows, workers)
    text = report.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.pred_dir:
        d = Path(args.pred_dir)
        d.mkdir(parents=True, exist_ok=True)
        for (sid, *_), p in zip(rows, preds):
            write_labels(d / f"{sid}_pred.sdl", p)
    return EXIT_OK


def format_table(rows):
    """Plain-text table of headline metrics, one row per variant."""
    head = ["variant"] + list(metrics.HEADLINE)
    lines = ["  ".join(f"{h:>12}" for h in head)]
    for name, rep in rows:
        vals = rep.headline()
        lines.append("  ".join([f"{name:>12}"] + [f"{vals[k]:12.2f}" for k in metrics.HEADLINE]))
    return "\n".join(lines)


def run_ablation(cfg, variants, split="test"):
    """Train and evaluate each variant from the same seed and data.

    Returns a list of ``(variant, MetricReport)``.
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigurationError(f"unknown variant(s) {unknown}; choose from {', '.join(VARIANTS)}")
    manifest = _manifest(cfg.manifest)
    rows = _split(manifest, split)
    out = []
    for v in variants:
        vcfg = replace(cfg.with_variant(v), out_dir=str(Path(cfg.out_dir) / v))
        model, _ = run_training(vcfg)
        report, _ = evaluate_rows(model, rows, vcfg.workers)
        _write_json(Path(vcfg.out_dir) / f"{split}_metrics.json", report.to_dict())
        out.append((v, report))
    return out


def cmd_ablate(args):
    cfg = _load_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = run_ablation(cfg, variants, args.split)
    table = format_table(rows)
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "ablation.txt").write_text(table + "\n")
    _write_json(Path(cfg.out_dir) / "ablation.json", {v: r.headline() for v, r in rows})
    print(table)
    return EXIT_OK


def cmd_render(args):
    preds = [read_labels(p) for p in args.pred]
    gts = [read_labels(g) for g in args.gt]
    if len(preds) != len(gts):
        raise ContractError(f"{len(preds)} prediction files but {len(gts)} ground-truth files")
    names = [Path(p).stem for p in args.pred]
    svg = render_many(list(zip(names, preds, gts)))
    Path(args.out).write_text(svg)
    return EXIT_OK


def cmd_config(args):
    if args.action == "init":
        text = RunConfig().to_json() + "\n"
    elif args.action == "schema":
        text = json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True) + "\n"
    else:
        if not args.path:
            raise ConfigurationError("config validate needs a path")
        RunConfig.load(args.path)
        text = "ok\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="segdiff", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset and manifest")
    s.add_argument("--samples", type=int, default=64)
    s.add_argument("--families", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--split", choices=("random", "cross_family"), default="random")
    s.add_argument("--persons", type=int, default=3)
    s.add_argument("--classes", type=int, default=6)
    s.add_argument("--frames", type=int, default=128)
    s.add_argument("--p-stay", type=float, default=0.95)
    s.add_argument("--cooccurrence", type=float, default=0.2)
    s.add_argument("--p-absent", type=float, default=0.1)
    s.add_argument("--feature-dim", type=int, default=32)
    s.add_argument("--snr", type=float, default=10.0)
    s.add_argument("--mixing-weights", default="", help="comma-separated, one per person")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("config", nargs="?")
    t.add_argument("--manifest")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--epochs", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    e.add_argument("checkpoint", nargs="?")
    e.add_argument("--predictions", help="directory of <id>_pred.sdl files to score instead")
    e.add_argument("--manifest")
    e.add_argument("--split", default="test")
    e.add_argument("--seed", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--out", help="report path (default: stdout)")
    e.add_argument("--pred-dir", help="also write SDL1 predictions here")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and compare ablation variants")
    a.add_argument("config", nargs="?")
    a.add_argument("--variants", default=",".join(("full",) + ABLATION_FLAGS))
    a.add_argument("--manifest")
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.add_argument("--epochs", type=int)
    a.add_argument("--workers", type=int)
    a.add_argument("--split", default="test")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("render", help="SVG timeline of predictions against ground truth")
    r.add_argument("--pred", nargs="+", required=True)
    r.add_argument("--gt", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, help="accepted for uniformity; rendering uses no randomness")
    r.set_defaults(func=cmd_render)

    c = sub.add_parser("config", help="write, describe or check run configs")
    c.add_argument("action", choices=("init", "schema", "validate"))
    c.add_argument("path", nargs="?")
    c.add_argument("--out")
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ContractError, DimensionError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, TrainingError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
