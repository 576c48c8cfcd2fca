"""Command-line entry point.

Exit codes: 0 success, 1 validation error (bad arguments, config, manifest
or labels), 2 runtime error.
"""

import argparse
import dataclasses
import logging
import os
import sys

from . import encoder as enc
from .config import RunConfig, config_from_dict, load_config
from .errors import ModanError, ValidationError
from .evaluation import cap_per_class, generate_hierarchical_corpus, project_2d
from .labels import MetadataVocabulary
from .manifest import Manifest, load_manifest, manifest_from_corpus, manifest_from_task, save_manifest
from .protocol import run_evaluation
from .trainer import METHODS, downstream, pretrain

log = logging.getLogger("modan")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--config", default=None, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output path")


def build_parser():
    parser = _Parser(prog="modan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("pretrain", help="pretrain an encoder on a metadata manifest")
    _common(p)
    p.add_argument("--manifest", help="pretraining manifest (else taken from the config)")
    p.add_argument("--method", choices=METHODS, default="mulsupcon")
    p.add_argument("--epochs", type=int, default=None)

    for name, helptext in (("finetune", "fine-tune encoder + head on a binary task"),
                           ("probe", "train a linear head on a frozen encoder")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--task", help="task manifest (else taken from the config)")
        p.add_argument("--checkpoint", help="pretrained checkpoint; omit for random init")

    p = sub.add_parser("evaluate", help="repeated k-fold comparison with Wilcoxon tests")
    _common(p)
    p.add_argument("--details", default=None, help="JSON details path (default: OUT.json)")

    p = sub.add_parser("project", help="2-D PCA projection of encoder embeddings")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", default=None, help="encoder checkpoint; omit for raw features")

    p = sub.add_parser("synth", help="write a synthetic hierarchical corpus and task")
    _common(p)
    p.add_argument("--modalities", default="CT,MR,US")
    p.add_argument("--anatomies", default="knee,breast,thyroid")
    p.add_argument("--n-per-cell", type=int, default=50)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.3)
    p.add_argument("--n-task", type=int, default=200)
    p.add_argument("--nuisance-gain", type=float, default=3.0,
                   help="noise multiplier on directions that carry no metadata")

    p = sub.add_parser("cap", help="keep at most N rows per class")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--cap", type=int, default=100)
    p.add_argument("--by", choices=("class_id", "cell"), default="class_id")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        base = cfg.base_dir
        cfg = RunConfig(**{**_fields(cfg), "seed": args.seed})
        cfg.base_dir = base
    return cfg


def _fields(cfg):
    return {k: getattr(cfg, k) for k in ("seed", "manifest", "task_manifest", "methods", "regime",
                                         "pretrain", "augmentation", "downstream", "cv")}


def cmd_pretrain(args):
    cfg = _config(args)
    manifest = load_manifest(args.manifest or cfg.resolve("manifest"))
    pcfg = cfg.pretrain_config(args.method)
    if args.epochs is not None:
        pcfg = dataclasses.replace(pcfg, epochs=args.epochs)
    result = pretrain(manifest.pretrain_dataset(), pcfg)
    result.save(args.out)
    result.write_log(args.out + ".log")
    log.info("wrote %s", args.out)


def _downstream(args, regime):
    cfg = _config(args)
    task = load_manifest(args.task or cfg.resolve("task_manifest")).task_dataset()
    dcfg = dataclasses.replace(cfg.downstream_config(cfg.seed), regime=regime)
    source = args.checkpoint
    model, head = downstream(source, task, dcfg)
    method = "scratch"
    if source:
        method = enc.load_checkpoint(source)[1]["method"]
    enc.save_checkpoint(args.out, model, f"{method}+{regime}", cfg.seed,
                        {"head_weight": head.weight, "head_bias": head.bias})


def cmd_evaluate(args):
    cfg = _config(args)
    corpus = None
    if any(m != "scratch" for m in cfg.methods):
        corpus = load_manifest(cfg.resolve("manifest")).pretrain_dataset()
    task = load_manifest(cfg.resolve("task_manifest")).task_dataset()
    report = run_evaluation(cfg, corpus, task)
    report.write(args.out, args.details or args.out + ".json")
    sys.stdout.write(report.table())


def cmd_project(args):
    manifest = load_manifest(args.manifest)
    x = manifest.features()
    if args.checkpoint:
        model = enc.load_checkpoint(args.checkpoint)[0]
        x = model.embed(x, use_head=False)
    xy = project_2d(x)
    with open(args.out, "w") as fh:
        fh.write("id\tmodality\tanatomy\tx\ty\n")
        for row, (a, b) in zip(manifest.rows, xy):
            fh.write(f"{row.id}\t{row.modality}\t{row.anatomy}\t{a!r}\t{b!r}\n")


def cmd_synth(args):
    seed = 0 if args.seed is None else args.seed
    vocab = MetadataVocabulary(args.modalities.split(","), args.anatomies.split(","))
    synth = generate_hierarchical_corpus(args.n_per_cell, vocab, args.latent_dim,
                                         args.noise_sigma, seed, n_task=args.n_task,
                                         nuisance_gain=args.nuisance_gain)
    os.makedirs(args.out, exist_ok=True)
    save_manifest(manifest_from_corpus(synth.pretrain), os.path.join(args.out, "corpus.tsv"))
    (task,) = synth.tasks.values()
    save_manifest(manifest_from_task(task, vocab, *synth.task_cell),
                  os.path.join(args.out, "task.tsv"))
    log.info("wrote corpus.tsv and task.tsv to %s", args.out)


def cmd_cap(args):
    manifest = load_manifest(args.manifest)
    seed = 0 if args.seed is None else args.seed
    if args.by == "class_id":
        if any(r.class_id is None for r in manifest.rows):
            raise ValidationError("cap --by class_id: some rows lack class_id")
        rows = cap_per_class(manifest.rows, args.cap, seed)
    else:
        keyed = [{"cell": (r.modality, r.anatomy), "row": r} for r in manifest.rows]
        rows = [k["row"] for k in cap_per_class(keyed, args.cap, seed, key="cell")]
    save_manifest(Manifest(manifest.vocab, rows), args.out)


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": lambda a: _downstream(a, "finetune"),
    "probe": lambda a: _downstream(a, "linear_probe"),
    "evaluate": cmd_evaluate,
    "project": cmd_project,
    "synth": cmd_synth,
    "cap": cmd_cap,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ModanError, OSError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
