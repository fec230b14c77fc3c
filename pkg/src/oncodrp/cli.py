"""Operator command line.

Subcommands: synth (write a synthetic data directory), pretrain (stage 1),
train (stage 2 with ablation switches), eval (metric table on a split),
inspect (checkpoint summary), recommend (one profile against a catalog)
and serve (HTTP service). Every run writes a manifest with its arguments,
seed and content hashes of inputs and outputs.

Exit codes: 0 success, 2 usage, 3 invalid input, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import (CheckpointError, checkpoint_hash, load_checkpoint, save_checkpoint)
from .dataio import (DataFormatError, SyntheticConfig, generate_synthetic, load_catalog,
                     load_cohort_profiles, load_dataset, save_catalog, save_cohort_profiles,
                     save_dataset, split)
from .encoder import EncoderConfig
from .metrics import auprc, auroc, concordance_index
from .mtlr import predict_risk
from .recommender import ModelBundle, ReferenceCohort, assemble_evidence, build_cohort_cache
from .service import ServiceConfigError, load_config, profile_from_document, run_service
from .tokenizer import (TokenizerError, build_vocabularies, collate, load_known_pairs,
                        load_panel, save_known_pairs, save_panel, tokenize)
from .trainer import TrainConfig, nsclc_subset, pretrain_survival, train_joint

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_RUNTIME = 4

DATA_FILES = {
    "panel": "panel.txt",
    "pairs": "known_pairs.tsv",
    "catalog": "catalog.tsv",
    "survival": "survival.tsv",
    "recist": "recist.tsv",
    "cellline": "cellline.tsv",
    "cohort": "cohort_crc.tsv",
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for sub in sorted(path.rglob("*")):
            if sub.is_file():
                h.update(sub.name.encode())
                h.update(sub.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path], outputs: list[Path], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "outputs": {str(p): _sha256(Path(p)) for p in outputs if Path(p).exists()},
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _load_data_dir(data_dir: Path, need=("panel", "pairs", "catalog")):
    paths = {k: data_dir / v for k, v in DATA_FILES.items()}
    for k in need:
        if not paths[k].exists():
            raise DataFormatError(f"missing {paths[k]} in data directory")
    catalog = load_catalog(paths["catalog"])
    gv, mv = build_vocabularies(load_panel(paths["panel"]), load_known_pairs(paths["pairs"]))
    return paths, catalog, gv, mv


def _train_config(args) -> TrainConfig:
    enc = EncoderConfig(dim=args.dim, heads=args.heads, layers=args.layers,
                        dropout=args.dropout)
    with warnings.catch_warnings():
        if args.quiet_ranges:
            warnings.simplefilter("ignore")
        return TrainConfig(
            lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
            optimizer=args.optimizer, dropout=args.dropout, seed=args.seed,
            loss_weights=tuple(args.loss_weights), n_intervals=args.intervals,
            encoder=enc, use_pretrain=not getattr(args, "no_pretrain", False),
            use_survival=not getattr(args, "no_survival", False),
            use_cellline=not getattr(args, "no_cellline", False),
            early_stopping=args.early_stopping, patience=args.patience,
            stop_at_val_metric=args.stop_at, freeze_encoder=getattr(args, "freeze_encoder", False),
        )


# --- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(
        n_survival=args.n_survival, n_recist=args.n_recist, n_cellline=args.n_cellline,
        panel_size=args.panel_size, n_drugs=args.n_drugs,
        signal_strength=args.signal, censor_rate=args.censor_rate,
        positive_rate=args.positive_rate, seed=args.seed)
    bundle = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_panel(out / DATA_FILES["panel"], bundle.panel_genes)
    save_known_pairs(out / DATA_FILES["pairs"], bundle.known_pairs)
    save_catalog(out / DATA_FILES["catalog"], bundle.catalog)
    save_dataset(out / DATA_FILES["survival"], "survival", bundle.survival)
    save_dataset(out / DATA_FILES["recist"], "recist", bundle.recist)
    save_dataset(out / DATA_FILES["cellline"], "cellline", bundle.cellline)
    # unlabeled reference cohort drawn from the CRC-tagged survival patients
    cohort = [(r.patient_id, r.profile) for r in bundle.survival
              if r.patient_id.startswith("CRC")][:args.cohort_size]
    save_cohort_profiles(out / DATA_FILES["cohort"], cohort)
    _write_manifest(out, "synth", args, [], [out / f for f in DATA_FILES.values()],
                    {"summary": bundle.summary})
    print(f"wrote synthetic data to {out}")
    for k, v in bundle.summary.items():
        print(f"  {k}: {v}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    data_dir = Path(args.data)
    paths, catalog, gv, mv = _load_data_dir(data_dir, ("panel", "pairs", "catalog", "survival"))
    records = load_dataset(paths["survival"], "survival", catalog)
    train, val, _ = split(records, seed=args.split_seed)
    cfg = _train_config(args)
    out = Path(args.out)
    log_path = out / "train_log.jsonl"
    out.mkdir(parents=True, exist_ok=True)
    ckpt = pretrain_survival(cfg, gv, mv, catalog, train, val, log_path=log_path)
    save_checkpoint(ckpt, out)
    _write_manifest(out, "pretrain", args, [paths["survival"], paths["catalog"]],
                    [out], {"checkpoint_hash": checkpoint_hash(ckpt),
                            "final": ckpt.metadata["final"]})
    print(f"pretrained checkpoint at {out} ({checkpoint_hash(ckpt)[:12]})")
    print(f"final: {ckpt.metadata['final']}")
    return EXIT_OK


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    need = ["panel", "pairs", "catalog", "recist"]
    if not args.no_survival:
        need.append("survival")
    if not args.no_cellline:
        need.append("cellline")
    paths, catalog, gv, mv = _load_data_dir(data_dir, tuple(need))
    recist = load_dataset(paths["recist"], "recist", catalog)
    r_train, r_val, _ = split(recist, seed=args.split_seed)

    survival_train = None
    if not args.no_survival:
        survival = load_dataset(paths["survival"], "survival", catalog)
        s_train, _, _ = split(survival, seed=args.split_seed)
        survival_train = nsclc_subset(s_train)
    cellline_train = None
    if not args.no_cellline:
        cellline = load_dataset(paths["cellline"], "cellline", catalog)
        cellline_train, _, _ = split(cellline, seed=args.split_seed,
                                     key=lambda r: r.cell_line_id)

    pretrained = None
    if not args.no_pretrain:
        if not args.pretrained:
            raise DataFormatError("either pass --pretrained CKPT_DIR or use --no-pretrain")
        pretrained = load_checkpoint(args.pretrained)

    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    ckpt = train_joint(cfg, gv, mv, catalog, r_train, survival_train, cellline_train,
                       recist_val=r_val, pretrained=pretrained, log_path=log_path)
    save_checkpoint(ckpt, out)
    inputs = [paths[k] for k in need]
    _write_manifest(out, "train", args, inputs, [out],
                    {"checkpoint_hash": checkpoint_hash(ckpt),
                     "final": ckpt.metadata["final"]})
    print(f"joint checkpoint at {out} ({checkpoint_hash(ckpt)[:12]})")
    print(f"final: {ckpt.metadata['final']}")
    return EXIT_OK


def _eval_split(parts, which: str):
    return {"train": parts[0], "val": parts[1], "test": parts[2]}[which]


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    bundle = ModelBundle.from_checkpoint(ckpt)
    model, gv, mv = bundle.model, bundle.gene_vocab, bundle.mut_vocab
    data_dir = Path(args.data)
    paths, catalog, _, _ = _load_data_dir(data_dir, ("panel", "pairs", "catalog"))

    rows = []
    if paths["survival"].exists() and ckpt.grid is not None:
        records = _eval_split(split(load_dataset(paths["survival"], "survival", catalog),
                                    seed=args.split_seed), args.split)
        risks = []
        for start in range(0, len(records), 256):
            chunk = records[start:start + 256]
            batch = collate([tokenize(r.profile, gv, mv) for r in chunk])
            fps = catalog.fingerprints([r.drug_id for r in chunk])
            risks.extend(predict_risk(model.predict_mtlr(batch, fps), ckpt.grid))
        ci = concordance_index([r.pfs_days for r in records],
                               [r.event_observed for r in records], risks)
        rows.append(("concordance_index", ci, len(records)))
    if paths["recist"].exists():
        records = _eval_split(split(load_dataset(paths["recist"], "recist", catalog),
                                    seed=args.split_seed), args.split)
        scores = []
        for start in range(0, len(records), 256):
            chunk = records[start:start + 256]
            batch = collate([tokenize(r.profile, gv, mv) for r in chunk])
            fps = catalog.fingerprints([r.drug_id for r in chunk])
            scores.extend(model.predict_recist(batch, fps))
        labels = [r.label for r in records]
        rows.append(("auroc", auroc(labels, scores), len(records)))
        rows.append(("auprc", auprc(labels, scores), len(records)))
    if not rows:
        raise DataFormatError("nothing to evaluate: no survival or recist file found")

    print(f"{'metric':<20}{'value':>10}{'n':>8}   split={args.split}")
    for name, value, n in rows:
        print(f"{name:<20}{value:>10.4f}{n:>8}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(
            json.dumps({name: value for name, value, _ in rows}, indent=1) + "\n")
        _write_manifest(out, "eval", args, [Path(args.checkpoint), data_dir], [out])
    return EXIT_OK


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    print(f"checkpoint {args.checkpoint}")
    print(f"  format version: {ckpt.format_version}")
    print(f"  content hash:   {checkpoint_hash(ckpt)}")
    print(f"  encoder config: {ckpt.encoder_config.to_dict()}")
    print(f"  intervals:      {ckpt.n_intervals}"
          + (f" boundaries={list(ckpt.grid.boundaries)}" if ckpt.grid else " (no grid)"))
    print(f"  vocabulary:     {len(ckpt.vocab.genes)} genes, {len(ckpt.vocab.pairs)} pairs")
    n_params = sum(int(np.prod(a.shape)) for a in ckpt.arrays.values())
    print(f"  arrays:         {len(ckpt.arrays)} ({n_params} parameters)")
    for key in ("stage", "seed", "epochs_run", "final"):
        if key in ckpt.metadata:
            print(f"  {key}: {ckpt.metadata[key]}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    bundle = ModelBundle.from_checkpoint(ckpt)
    catalog = load_catalog(args.catalog)
    doc = json.loads(Path(args.profile).read_text(encoding="utf-8"))
    profile = profile_from_document(doc)
    if len(profile) == 0:
        raise DataFormatError("profile has no usable mutations")

    cache = None
    if args.cohort:
        profiles = load_cohort_profiles(args.cohort)
        cohort = ReferenceCohort(args.cohort_id, args.cohort_id, profiles)
        cache = build_cohort_cache(cohort, catalog, bundle)
    payload = assemble_evidence(profile, bundle, catalog, cache, k=args.top)

    print(f"{'rank':<6}{'drug':<12}{'name':<18}{'score':>8}{'robust_z':>10}")
    for r in payload.recommendations:
        z = "-" if r.robust_z is None else f"{r.robust_z:.2f}"
        tag = " (degenerate IQR)" if r.degenerate_iqr and cache else ""
        print(f"{r.rank:<6}{r.drug_id:<12}{r.name:<18}{r.probability:>8.4f}{z:>10}{tag}")
    d = payload.dispersion
    conf = "LOW CONFIDENCE" if d.low_confidence else "ok"
    print(f"patient dispersion: iqr={d.iqr:.4f} median={d.median:.4f} [{conf}]")

    if args.export_plot_data:
        export = {
            "swarm": payload.all_scores,
            "boxes": {r.drug_id: r.cohort_summary.to_dict()
                      for r in payload.recommendations if r.cohort_summary},
            "patient": {r.drug_id: r.probability for r in payload.recommendations},
            "model_hash": payload.checkpoint_hash,
        }
        Path(args.export_plot_data).write_text(json.dumps(export, indent=1, sort_keys=True) + "\n")
        print(f"plot data written to {args.export_plot_data}")
    return EXIT_OK


def cmd_serve(args) -> int:
    config = load_config(args.config)
    run_service(config)
    return EXIT_OK


# --- argument wiring ----------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--intervals", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--loss-weights", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                   metavar=("W_SURV", "W_RECIST", "W_CELL"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--early-stopping", action="store_true")
    p.add_argument("--patience", type=int, default=25)
    p.add_argument("--stop-at", type=float, default=None,
                   help="stop once the validation metric reaches this value")
    p.add_argument("--quiet-ranges", action="store_true",
                   help="silence warnings about unusual lr/epoch/batch choices")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="oncodrp",
                                     description="drug response model: data, training, "
                                                 "evaluation and serving")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub_map: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("synth", help="generate a synthetic data directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-survival", type=int, default=400)
    p.add_argument("--n-recist", type=int, default=400)
    p.add_argument("--n-cellline", type=int, default=400)
    p.add_argument("--panel-size", type=int, default=40)
    p.add_argument("--n-drugs", type=int, default=70)
    p.add_argument("--signal", type=float, default=2.0)
    p.add_argument("--censor-rate", type=float, default=0.3)
    p.add_argument("--positive-rate", type=float, default=0.55)
    p.add_argument("--cohort-size", type=int, default=30)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="stage 1: survival pretraining")
    p.add_argument("--data", required=True, help="synthetic data directory")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    _add_train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage 2: joint training")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pretrained", help="stage-1 checkpoint directory")
    p.add_argument("--no-pretrain", action="store_true",
                   help="start from random initialization")
    p.add_argument("--no-survival", action="store_true", help="drop the survival loss")
    p.add_argument("--no-cellline", action="store_true", help="drop the cell-line loss")
    p.add_argument("--freeze-encoder", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric table for a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", help="optional directory for metrics.json + manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print a checkpoint summary")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("recommend", help="rank the catalog for one profile")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--profile", required=True, help="JSON profile document")
    p.add_argument("--cohort", help="reference cohort TSV for z-score evidence")
    p.add_argument("--cohort-id", default="reference")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--export-plot-data", help="write box/swarm payload JSON here")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.set_defaults(func=cmd_serve)

    sub_map.update(sub.choices)
    return parser, sub_map


def _apply_config_defaults(sub_map: dict, argv: list[str]) -> None:
    """For pretrain/train, a --config JSON supplies flag defaults; flags
    given on the command line still win (they override the defaults)."""
    if not argv or argv[0] not in ("pretrain", "train") or "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return  # argparse reports the missing value
    try:
        overrides = json.loads(Path(argv[idx + 1]).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read train config {argv[idx + 1]}: {exc}") from exc
    sub = sub_map[argv[0]]
    valid = {a.dest for a in sub._actions}
    unknown = set(overrides) - valid
    if unknown:
        raise DataFormatError(f"unknown train config keys {sorted(unknown)}")
    sub.set_defaults(**overrides)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, sub_map = build_parser()
    try:
        _apply_config_defaults(sub_map, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # argparse uses 2 for usage errors already
            return int(exc.code or 0)
        return args.func(args)
    except (DataFormatError, TokenizerError, ServiceConfigError, CheckpointError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
