"""Command-line driver for the two-phase training and evaluation workflow.

Workdir layout::

    manifests/corpus.jsonl, base_train.jsonl, head_train.jsonl, test.jsonl
    manifests/subsets/{dm,gan,real}.jsonl
    manifests/benches/<bench>.jsonl
    models/base_{dm,gan,real}/        base-model bundles
    models/fusion/                    fusion bundle
    reports/                          metrics in the requested format
    run_<subcommand>.json             config snapshot, seeds and output digests

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from . import __version__
from .basemodel import evaluate_base_model, load_base_model, save_base_model, train_base_model
from .config import RunConfig, toy_config
from .data import (
    ClassLabel,
    GenBenchSpec,
    Manifest,
    assemble_generalization_set,
    balance_eval_set,
    carve_validation,
    ingest,
    make_unbalanced_subset,
    split_three_way,
)
from .errors import DeepFeatureXError, ValidationError
from .evaluation import emit_report, evaluate, from_json, generalization_eval, robustness_sweep
from .fusion import BRANCH_ORDER, build_fusion_model, load_fusion_model, save_fusion_model, train_head
from .toy import make_toy_corpus

log = logging.getLogger("deepfeaturex")

EXT = {"json": "json", "csv": "csv", "markdown": "md"}


class Workdir:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def manifests(self) -> Path:
        return self.root / "manifests"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def manifest(self, name: str) -> Path:
        return self.manifests / f"{name}.jsonl"

    def subset(self, label: ClassLabel) -> Path:
        return self.manifests / "subsets" / f"{label.tag}.jsonl"

    def base_model(self, label: ClassLabel) -> Path:
        return self.models / f"base_{label.tag}"

    @property
    def fusion(self) -> Path:
        return self.models / "fusion"

    def load(self, name: str) -> Manifest:
        path = self.manifest(name)
        if not path.exists():
            raise ValidationError(f"missing manifest {path}; run the earlier pipeline step first")
        return Manifest.load(path)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run_metadata(wd: Workdir, command: str, cfg: RunConfig, outputs: list[Path], extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": {
            p.relative_to(wd.root).as_posix(): _digest(p) for p in sorted(outputs) if p.is_file() and p.is_relative_to(wd.root)
        },
    }
    if extra:
        doc.update(extra)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    name = f"run_{command.replace('-', '_')}.json"
    parents = {p.parent for p in outputs if p.parent.is_relative_to(wd.root)}
    # one file per artifact directory; nested bundle members share their parent's
    dirs = {wd.root} | {d for d in parents if not any(d != o and d.is_relative_to(o) for o in parents)}
    for d in sorted(dirs):
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text, encoding="utf-8")


def _bundle_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.rglob("*") if p.is_file() and not p.name.startswith("run_"))


def cmd_make_toy(args, cfg: RunConfig, wd: Workdir) -> dict:
    out = Path(args.out)
    make_toy_corpus(out, per_class=args.per_class, size=args.size, seed=cfg.seed)
    toy = toy_config(str(out.resolve()), str(wd.root), seed=cfg.seed)
    if args.write_config:
        toy.save(args.write_config)
    print(f"wrote {3 * args.per_class} images under {out}")
    return {"outputs": [Path(args.write_config)] if args.write_config else []}


def cmd_ingest(args, cfg: RunConfig, wd: Workdir) -> dict:
    root = args.root or cfg.corpus_root
    m = ingest(root, seed=cfg.seed)
    path = m.save(wd.manifest("corpus"))
    counts = m.class_counts()
    print(f"ingested {len(m)} images: " + ", ".join(f"{c.tag}={n}" for c, n in counts.items()) + f" ({m.provenance})")
    return {"outputs": [path]}


def cmd_split(args, cfg: RunConfig, wd: Workdir) -> dict:
    parts = split_three_way(wd.load("corpus"), tuple(cfg.split_fractions), seed=cfg.seed)
    outputs = [p.save(wd.manifest(n)) for p, n in zip(parts, ("base_train", "head_train", "test"))]
    print("split sizes: " + "/".join(str(len(p)) for p in parts))
    return {"outputs": outputs}


def cmd_make_subsets(args, cfg: RunConfig, wd: Workdir) -> dict:
    base = wd.load("base_train")
    outputs = []
    for c in BRANCH_ORDER:
        sub = make_unbalanced_subset(base, c, cfg.unbalance_ratio, seed=cfg.seed)
        outputs.append(sub.save(wd.subset(c)))
        n_pred = sum(1 for r in sub if r.label == c)
        print(f"{c.tag}: {n_pred} predominant + {len(sub) - n_pred} others")
    return {"outputs": outputs}


def cmd_train_base(args, cfg: RunConfig, wd: Workdir) -> dict:
    label = ClassLabel.parse(args.label)
    path = wd.subset(label)
    if not path.exists():
        raise ValidationError(f"missing subset {path}; run make-subsets first")
    subset = Manifest.load(path)
    train, val = carve_validation(subset, cfg.val_fraction, seed=cfg.seed, by_binary=True)
    bm = train_base_model(train, val, label, cfg.backbone_config(), cfg.base_train_config())
    directory = wd.base_model(label)
    meta = save_base_model(bm, directory)
    outputs = _bundle_files(directory)
    print(f"trained {label.tag} base model: selected epoch {bm.selected_epoch}, digest {meta['backbone_digest'][:12]}")
    test_path = wd.manifest("test")
    if test_path.exists():
        test = Manifest.load(test_path)
        if all(n > 0 for n in test.class_counts().values()):
            report = evaluate_base_model(bm, balance_eval_set(test, seed=cfg.seed))
            outputs.append(emit_report(report, args.format, wd.reports / f"base_{label.tag}.{EXT[args.format]}"))
            print(f"  test acc {report.accuracy:.4f} recall {report.recall:.4f} precision {report.precision:.4f}")
    return {"outputs": outputs, "extra": {"backbone_digest": meta["backbone_digest"]}}


def cmd_train_head(args, cfg: RunConfig, wd: Workdir) -> dict:
    bases = []
    for c in BRANCH_ORDER:
        directory = wd.base_model(c)
        if not (directory / "meta.json").exists():
            raise ValidationError(f"missing base model {directory}; run train-base --class {c.tag}")
        bases.append(load_base_model(directory))
    fm = build_fusion_model(bases, cfg.head_config())
    train, val = carve_validation(wd.load("head_train"), cfg.val_fraction, seed=cfg.seed)
    val = balance_eval_set(val, seed=cfg.seed)
    train_head(fm, train, val, config=cfg.head_train_config())
    meta = save_fusion_model(fm, wd.fusion)
    print(f"trained fusion head: selected epoch {fm.selected_epoch}, val loss {fm.training_log[fm.selected_epoch - 1]['val_loss']:.6g}")
    return {"outputs": _bundle_files(wd.fusion), "extra": {"base_digests": meta["base_digests"]}}


def _fusion(wd: Workdir):
    if not (wd.fusion / "meta.json").exists():
        raise ValidationError(f"missing fusion model {wd.fusion}; run train-head first")
    return load_fusion_model(wd.fusion)


def cmd_eval(args, cfg: RunConfig, wd: Workdir) -> dict:
    fm = _fusion(wd)
    test = balance_eval_set(wd.load("test"), seed=cfg.seed)
    log_path = wd.reports / "predictions.jsonl"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    multi, binary = evaluate(fm, test, "raw", log_path=log_path)
    out = emit_report([multi, binary], args.format, wd.reports / f"eval.{EXT[args.format]}")
    print(f"multiclass acc {multi.accuracy:.4f} f1 {multi.f1:.4f}; binary acc {binary.accuracy:.4f} f1 {binary.f1:.4f}")
    return {"outputs": [out, log_path]}


def cmd_robustness(args, cfg: RunConfig, wd: Workdir) -> dict:
    fm = _fusion(wd)
    test = balance_eval_set(wd.load("test"), seed=cfg.seed)
    report = robustness_sweep(fm, test, cfg.qf_list, wd.root / "jpeg")
    out = emit_report(report, args.format, wd.reports / f"robustness.{EXT[args.format]}")
    for setting, (multi, binary) in report.rows.items():
        print(f"{setting:>5}: multiclass {multi.accuracy:.4f}  binary {binary.accuracy:.4f}")
    return {"outputs": [out]}


def cmd_genbench(args, cfg: RunConfig, wd: Workdir) -> dict:
    specs = GenBenchSpec.load_many(args.spec) if args.spec else [GenBenchSpec.from_dict(d) for d in cfg.benches]
    if not specs:
        raise ValidationError("no benchmark specs: pass --spec or set 'benches' in the config")
    pool = Manifest.load(args.pool) if args.pool else wd.load(cfg.bench_pool)
    benches = []
    outputs = []
    for spec in specs:
        m = assemble_generalization_set(pool, spec)
        outputs.append(m.save(wd.manifests / "benches" / f"{spec.name}.jsonl"))
        benches.append((spec.name, m))
        print(f"{spec.name}: {len(m)} records")
    if (wd.fusion / "meta.json").exists():
        report = generalization_eval(_fusion(wd), benches)
        outputs.append(emit_report(report, args.format, wd.reports / f"genbench.{EXT[args.format]}"))
        print("accuracy: " + ", ".join(f"{n}={m.accuracy:.4f}" for n, m in report.benches.items()))
    return {"outputs": outputs}


def cmd_report(args, cfg: RunConfig, wd: Workdir) -> dict:
    src = Path(args.input)
    report = from_json(src.read_text(encoding="utf-8"))
    dst = Path(args.output) if args.output else src.with_suffix("." + EXT[args.format])
    emit_report(report, args.format, dst)
    print(f"wrote {dst}")
    return {"outputs": [dst] if dst.is_relative_to(wd.root) else []}


COMMANDS = {
    "make-toy": cmd_make_toy,
    "ingest": cmd_ingest,
    "split": cmd_split,
    "make-subsets": cmd_make_subsets,
    "train-base": cmd_train_base,
    "train-head": cmd_train_head,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "genbench": cmd_genbench,
    "report": cmd_report,
}

# commands that do not mutate the workdir skip the lock
_UNLOCKED = {"make-toy", "report"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--workdir", help="artifact directory (overrides config)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--format", choices=sorted(EXT), default="json", help="report format")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override, repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="deepfeaturex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("make-toy", parents=[common], help="write the procedural three-class corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--write-config", help="also write a matching run config here")

    p = sub.add_parser("ingest", parents=[common], help="index a corpus into manifests/corpus.jsonl")
    p.add_argument("--root", help="corpus root (overrides config)")

    sub.add_parser("split", parents=[common], help="stratified base/head/test split")
    sub.add_parser("make-subsets", parents=[common], help="the three 90:10 base-model subsets")

    p = sub.add_parser("train-base", parents=[common], help="train one base model")
    p.add_argument("--class", dest="label", required=True, choices=["real", "gan", "dm"])

    sub.add_parser("train-head", parents=[common], help="train the fusion head")
    sub.add_parser("eval", parents=[common], help="score the balanced test set")
    sub.add_parser("robustness", parents=[common], help="JPEG quality-factor sweep")

    p = sub.add_parser("genbench", parents=[common], help="assemble and score generalization benches")
    p.add_argument("--spec", help="GenBenchSpec JSON (one spec, a list, or {'benches': [...]})")
    p.add_argument("--pool", help="manifest to draw from (default: config bench_pool)")

    p = sub.add_parser("report", parents=[common], help="convert a JSON report to another format")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for assignment in args.set:
        cfg.override(assignment)
    if args.workdir:
        cfg.workdir = args.workdir
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = int(exc.code or 0)
        if code:
            return _error("UsageError", "invalid command line; see usage above", code)
        return code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        wd = Workdir(cfg.workdir)
        handler = COMMANDS[args.command]
        if args.command in _UNLOCKED:
            result = handler(args, cfg, wd)
        else:
            wd.root.mkdir(parents=True, exist_ok=True)
            with FileLock(str(wd.root / ".lock"), timeout=0):
                result = handler(args, cfg, wd)
                name = args.command if args.command != "train-base" else f"train-base-{args.label}"
                _write_run_metadata(wd, name, cfg, result.get("outputs", []), result.get("extra"))
    except Timeout:
        return _error("WorkdirLocked", "another process holds the workdir lock", 1)
    except ValidationError as exc:
        return _error(type(exc).__name__, str(exc), 3)
    except (DeepFeatureXError, OSError) as exc:
        return _error(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
