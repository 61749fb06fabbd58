"""Command-line entry point wiring the library into workflows.

The verbs follow the inspection workflow end to end: ingest raw imagery
into a patch manifest, summarize it, build and verify split plans, train
and evaluate models, compare runs, build and serve review queues, apply
review decisions, render explanations, and generate the synthetic
benchmark dataset.

Exit codes: 0 success, 1 validation error (bad flags or bad inputs),
2 runtime failure. The dataset root for image paths resolves as
flag > SHIFTFORGE_DATA_DIR > the manifest's own directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ShiftForgeError
from .ioutils import dump_json, iter_jsonl, write_json, write_jsonl
from .manifest import (
    LABEL_NOK,
    LABEL_OK,
    LABELS,
    Manifest,
    SampleRecord,
    load_manifest,
    save_manifest,
)
from .metrics import CLASS_INDEX, CvReport, SamplePrediction, compare_runs
from .patches import FocusRegion, extract_patches
from .review import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    REVIEW_MODES,
    apply_decisions,
    build_review_queue,
    ensemble_predictions,
    load_decisions,
    load_queue,
    save_queue,
)
from .splits import (
    SplitStrategy,
    build_split,
    default_folds,
    load_plan,
    resolve_kind,
    save_plan,
    verify_split,
)
from .summary import summarize
from .synth import SynthConfig, generate_dataset, save_dataset
from .training import ArrayDataset, TrainConfig, evaluate, load_train_config, run_cv

PROG = "shiftforge"


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 1 on usage errors instead of 2."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def resolve_root(explicit: str | None, manifest_path: str | Path) -> Path:
    if explicit:
        return Path(explicit)
    env = os.environ.get("SHIFTFORGE_DATA_DIR")
    if env:
        return Path(env)
    return Path(manifest_path).resolve().parent


# ---------------------------------------------------------------- ingest

def _cmd_ingest(args: argparse.Namespace) -> int:
    src = Path(args.src)
    sources_file = src / "sources.jsonl"
    if not sources_file.is_file():
        raise ShiftForgeError(
            f"{sources_file} not found; ingest expects one JSON line per source image "
            "with fields image, label, part_id, functional_part_id, category, "
            "transmission, side, and an optional focus {{x, y, width, height}}"
        )
    from PIL import Image

    out_path = Path(args.out)
    patch_dir = Path(args.patch_dir) if args.patch_dir else out_path.resolve().parent / "patches"
    patch_dir.mkdir(parents=True, exist_ok=True)

    records: list[SampleRecord] = []
    n_sources = 0
    for line_number, row in iter_jsonl(sources_file):
        n_sources += 1
        image_path = src / row["image"]
        with Image.open(image_path) as img:
            pixels = np.asarray(img.convert("RGB"))
        region = None
        if row.get("focus"):
            f = row["focus"]
            region = FocusRegion(x=f["x"], y=f["y"], width=f["width"], height=f["height"])
        stem = Path(row["image"]).stem
        for patch, (ox, oy) in extract_patches(pixels, args.patch_size, region):
            sample_id = f"{stem}-x{ox:04d}-y{oy:04d}"
            file_name = f"{sample_id}.png"
            Image.fromarray(patch, mode="RGB").save(patch_dir / file_name)
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    image_path=os.path.relpath(patch_dir / file_name, out_path.resolve().parent),
                    label=row["label"],
                    part_id=row["part_id"],
                    functional_part_id=row["functional_part_id"],
                    category=row["category"],
                    transmission=row["transmission"],
                    side=row["side"],
                    patch_origin=(ox, oy),
                )
            )
    manifest = Manifest(records=records)
    save_manifest(manifest, out_path)
    print(f"ingested {n_sources} source images into {len(records)} patches -> {out_path}")
    return 0


# ------------------------------------------------------------- summarize

def _cmd_summarize(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    report = summarize(manifest).to_dict()
    if args.out:
        write_json(args.out, report)
        print(f"summary written to {args.out}")
    else:
        print(dump_json(report), end="")
    return 0


# ----------------------------------------------------------------- split

def _cmd_split(args: argparse.Namespace) -> int:
    if getattr(args, "split_cmd", None) == "verify":
        return _cmd_split_verify(args)
    for flag in ("manifest", "strategy", "out"):
        if getattr(args, flag) is None:
            raise ShiftForgeError(f"--{flag} is required to build a split plan")
    manifest = load_manifest(args.manifest)
    kind = resolve_kind(args.strategy)
    folds = args.folds if args.folds is not None else default_folds(kind)
    strategy = SplitStrategy(kind=kind, folds=folds, seed=args.seed)
    plan = build_split(manifest, strategy)
    violations = verify_split(manifest, plan)
    if violations:
        for violation in violations:
            print(violation, file=sys.stderr)
        raise ShiftForgeError("freshly built plan failed verification")
    save_plan(plan, args.out)
    sizes = ", ".join(str(len(f.test)) for f in plan.folds)
    print(f"{kind}: {len(plan.folds)} folds (test sizes {sizes}) -> {args.out}")
    return 0


def _cmd_split_verify(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    plan = load_plan(args.plan)
    violations = verify_split(manifest, plan)
    if violations:
        for violation in violations:
            print(violation)
        print(f"{len(violations)} violation(s) found")
        return 1
    print("plan verified: no violations")
    return 0


# ----------------------------------------------------------------- train

def _train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    config = load_train_config(args.config) if args.config else TrainConfig()
    overrides = {}
    for flag in ("backbone", "epochs", "batch_size", "learning_rate", "scheduler", "seed"):
        value = getattr(args, flag)
        if value is not None:
            overrides[flag] = value
    regularization = config.regularization
    if args.alpha is not None:
        regularization = dataclasses.replace(regularization, alpha=args.alpha)
    if args.temperature is not None:
        regularization = dataclasses.replace(regularization, temperature=args.temperature)
    if regularization is not config.regularization:
        overrides["regularization"] = regularization
    return dataclasses.replace(config, **overrides) if overrides else config


def _add_train_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TrainConfig as JSON or TOML")
    parser.add_argument("--backbone", help="backbone identifier, e.g. small_cnn or resnet50")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--scheduler", choices=("cosine_annealing", "constant"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha", type=float, help="contrastive weight override")
    parser.add_argument("--temperature", type=float, help="contrastive temperature override")


def _cmd_train(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    plan = load_plan(args.plan)
    violations = verify_split(manifest, plan)
    if violations:
        for violation in violations:
            print(violation, file=sys.stderr)
        raise ShiftForgeError("split plan fails verification against this manifest")
    config = _train_config_from_args(args)
    root = resolve_root(args.root, args.manifest)
    data = ArrayDataset.from_manifest(manifest, root)
    report = run_cv(data, plan, config, out_dir=args.out_dir, progress=print)
    print(f"mean f1 {report.mean_f1:.4f} (std {report.std_f1:.4f}) -> {args.out_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    import torch

    from .backbones import build_backbone

    manifest = load_manifest(args.manifest)
    plan = load_plan(args.plan)
    folds = {f.fold_index: f for f in plan.folds}
    if args.fold not in folds:
        raise ShiftForgeError(f"plan has no fold {args.fold}")
    fold = folds[args.fold]
    config = _train_config_from_args(args)
    root = resolve_root(args.root, args.manifest)
    by_id = manifest.by_id()
    test_records = [by_id[s] for s in fold.test]
    data = ArrayDataset.from_manifest(Manifest(records=test_records), root)

    model = build_backbone(config.backbone, **config.backbone_options)
    state = torch.load(args.model, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    result = evaluate(
        model,
        data.images,
        data.records,
        config,
        fold_index=fold.fold_index,
        held_out_group=fold.held_out_group,
    )
    if args.out:
        write_json(args.out, result.to_dict())
    print(
        f"fold {fold.fold_index}: f1 {result.f1:.4f} "
        f"(precision {result.precision:.4f}, recall {result.recall:.4f})"
    )
    return 0


def _load_report(path: str | Path) -> CvReport:
    import json

    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    row = json.loads(path.read_text(encoding="utf-8"))
    from .metrics import FoldResult, aggregate_cv

    folds = []
    for fold_row in row["folds"]:
        confusion = fold_row["confusion"]
        folds.append(
            FoldResult(
                fold_index=fold_row["fold_index"],
                f1=fold_row["f1"],
                precision=fold_row["precision"],
                recall=fold_row["recall"],
                tp=confusion["tp"],
                fp=confusion["fp"],
                tn=confusion["tn"],
                fn=confusion["fn"],
                f1_arithmetic=fold_row["f1_arithmetic"],
                f1_macro=fold_row["f1_macro"],
                per_category_f1=fold_row.get("per_category_f1", {}),
                degenerate_metrics=tuple(fold_row.get("degenerate_metrics", ())),
                held_out_group=fold_row.get("held_out_group"),
            )
        )
    report = aggregate_cv(folds, row["config_fingerprint"], row["plan_fingerprint"])
    if abs(report.mean_f1 - row["mean_f1"]) > 1e-9:
        raise ShiftForgeError(f"{path}: stored mean_f1 disagrees with its folds")
    return report


def _cmd_compare(args: argparse.Namespace) -> int:
    report_a = _load_report(args.run_a)
    report_b = _load_report(args.run_b)
    comparison = compare_runs(report_a, report_b)
    print(f"A = {args.run_a}")
    print(f"B = {args.run_b}")
    print(f"{'fold':>4}  {'held_out_group':<24} {'f1_a':>8} {'f1_b':>8} {'delta':>8}")
    for row in comparison.fold_deltas:
        group = row["held_out_group"] or "-"
        print(
            f"{row['fold_index']:>4}  {group:<24} "
            f"{row['f1_a']:>8.4f} {row['f1_b']:>8.4f} {row['delta']:>+8.4f}"
        )
    print(
        f"{'mean':>4}  {'':<24} {report_a.mean_f1:>8.4f} {report_b.mean_f1:>8.4f} "
        f"{comparison.mean_delta:>+8.4f}"
    )
    for category, delta in comparison.per_category_deltas.items():
        print(f"      {category:<24} {'':>8} {'':>8} {delta:>+8.4f}")
    if args.out:
        write_json(args.out, comparison.to_dict())
    return 0


# ------------------------------------------------------------ loss-check

def _cmd_loss_check(args: argparse.Namespace) -> int:
    import math

    from .losses import (
        EmbeddingBatch,
        PredictionBatch,
        RegularizationConfig,
        combined_loss,
        combined_loss_and_grad,
        cross_entropy,
        grad_check,
        snn_loss,
        snn_loss_reference,
    )

    rng = np.random.default_rng(args.seed)
    temperatures = (0.5, 2.0, 10.0)
    worst_oracle = 0.0
    for _ in range(args.batches):
        n = int(rng.integers(2, 17))
        d = int(rng.integers(2, 9))
        vectors = rng.normal(size=(n, d))
        labels = rng.integers(0, int(rng.integers(2, 4)), size=n)
        batch = EmbeddingBatch(vectors=vectors, labels=labels)
        for temperature in temperatures:
            worst_oracle = max(
                worst_oracle,
                abs(snn_loss(batch, temperature) - snn_loss_reference(batch, temperature)),
            )
    oracle_ok = worst_oracle < 1e-9
    print(f"oracle equivalence over {args.batches} batches: max |diff| = {worst_oracle:.3e} "
          f"[{'ok' if oracle_ok else 'FAIL'}]")

    worst_grad = 0.0
    cfg = RegularizationConfig(alpha=0.2, temperature=2.0)
    for _ in range(max(args.batches // 10, 5)):
        n = int(rng.integers(3, 13))
        d = int(rng.integers(2, 7))
        vectors = rng.normal(size=(n, d))
        labels = rng.integers(0, 2, size=n)
        batch = EmbeddingBatch(vectors=vectors, labels=labels)

        def loss_and_grad(b: EmbeddingBatch):
            scores = np.zeros((len(b.labels), 2))
            prediction = PredictionBatch(scores=scores, labels=b.labels)
            return combined_loss_and_grad(prediction, b, cfg)

        worst_grad = max(worst_grad, grad_check(loss_and_grad, batch))
    grad_ok = worst_grad < 1e-4
    print(f"gradient vs finite differences: max rel err = {worst_grad:.3e} "
          f"[{'ok' if grad_ok else 'FAIL'}]")

    pair = EmbeddingBatch(vectors=np.array([[1.0, 0.0], [0.0, 1.0]]), labels=np.array([0, 0]))
    pair_loss = snn_loss(pair, 2.0)
    quad = EmbeddingBatch(vectors=np.ones((4, 3)), labels=np.array([0, 0, 1, 1]))
    quad_loss = snn_loss(quad, 2.0)
    logits = np.array([[2.0, -1.0], [0.5, 0.5], [-1.0, 3.0]])
    labels3 = np.array([0, 1, 1])
    plain = PredictionBatch(scores=logits, labels=labels3)
    alpha_zero = abs(
        combined_loss(
            plain,
            EmbeddingBatch(vectors=np.ones((3, 2)), labels=labels3),
            RegularizationConfig(alpha=0.0),
        )
        - cross_entropy(plain)
    )
    closed_ok = (
        abs(pair_loss) < 1e-12 and abs(quad_loss - math.log(3.0)) < 1e-9 and alpha_zero < 1e-12
    )
    print(
        "closed forms: two-sample same-class "
        f"{pair_loss:.3e}, four identical two-class |ln3 diff| {abs(quad_loss - math.log(3.0)):.3e}, "
        f"alpha=0 vs cross-entropy {alpha_zero:.3e} [{'ok' if closed_ok else 'FAIL'}]"
    )
    if oracle_ok and grad_ok and closed_ok:
        return 0
    print("loss-check failed", file=sys.stderr)
    return 2


# ---------------------------------------------------------------- review

def _read_predictions(source: str | Path) -> list[SamplePrediction]:
    """Predictions from a run directory (all folds) or one JSONL file."""
    source = Path(source)
    if source.is_dir():
        files = sorted(source.glob("folds/fold_*/predictions.jsonl"))
        if not files:
            raise ShiftForgeError(f"{source} contains no folds/*/predictions.jsonl")
    else:
        files = [source]
    predictions: list[SamplePrediction] = []
    for path in files:
        for _, row in iter_jsonl(path):
            predictions.append(SamplePrediction.from_dict(row))
    return predictions


def _cmd_review_build_queue(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    runs = [_read_predictions(source) for source in args.predictions]
    predictions = ensemble_predictions(runs)
    mode = args.mode.replace("-", "_")
    queue = build_review_queue(predictions, manifest, mode, threshold=args.threshold)
    save_queue(queue, args.out)
    print(f"{mode} queue: {len(queue)} items -> {args.out}")
    return 0


def _cmd_review_serve(args: argparse.Namespace) -> int:
    from .review_server import serve_review

    manifest = load_manifest(args.manifest)
    queue = load_queue(args.queue)
    root = resolve_root(args.root, args.manifest)
    server = serve_review(
        queue=queue,
        manifest=manifest,
        image_root=root,
        decisions_path=args.decisions,
        host=args.host,
        port=args.port,
        ui_dir=args.ui_dir,
    )
    host, port = server.server_address[:2]
    print(f"review service on http://{host}:{port}/ ({len(queue)} queue items)")
    print(f"decisions append to {args.decisions}; stop with Ctrl+C")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("stopping")
    finally:
        server.server_close()
    return 0


def _cmd_review_apply(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    decisions = load_decisions(args.decisions)
    if not decisions:
        raise ShiftForgeError(f"no decisions found in {args.decisions}")
    result = apply_decisions(manifest, decisions)
    save_manifest(result.manifest, args.out)
    if args.change_log:
        write_jsonl(args.change_log, result.changes)
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(
        f"applied {len(decisions)} decisions: {len(result.changes)} records changed -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------- explain

def _cmd_explain_gradcam(args: argparse.Namespace) -> int:
    import torch

    from .augment import eval_transform
    from .backbones import build_backbone
    from .explain import gradcam_batch

    manifest = load_manifest(args.manifest)
    config = _train_config_from_args(args)
    root = resolve_root(args.root, args.manifest)
    by_id = manifest.by_id()
    sample_ids = [s.strip() for s in args.samples.split(",") if s.strip()]
    missing = [s for s in sample_ids if s not in by_id]
    if missing:
        raise ShiftForgeError(f"unknown sample_ids: {missing}")
    records = [by_id[s] for s in sample_ids]
    data = ArrayDataset.from_manifest(Manifest(records=records), root)

    model = build_backbone(config.backbone, **config.backbone_options)
    state = torch.load(args.model, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()

    inputs = eval_transform(
        torch.from_numpy(np.ascontiguousarray(data.images.transpose(0, 3, 1, 2))),
        config.augmentation,
    )
    if args.target_class == "auto":
        with torch.no_grad():
            _, logits = model(inputs)
        targets = logits.argmax(dim=1).tolist()
    else:
        targets = [CLASS_INDEX[args.target_class]] * len(records)
    maps = gradcam_batch(model, inputs, targets, sample_ids, target_layer=args.layer)
    out_dir = Path(args.out_dir)
    for activation_map in maps:
        path = activation_map.save(out_dir)
        print(f"{activation_map.sample_id}: {path}")
    print(f"shared scale {maps[0].global_scale:.6g}, layer {maps[0].target_layer}")
    return 0


def _cmd_explain_project(args: argparse.Namespace) -> int:
    import json

    from .explain import export_projection_csv, project_embeddings

    source = Path(args.embeddings)
    if source.is_dir():
        npy_path = source / "embeddings.npy"
        sidecar_path = source / "embeddings.json"
    else:
        npy_path = source
        sidecar_path = source.with_suffix(".json")
    embeddings = np.load(npy_path)
    sample_ids = None
    if sidecar_path.is_file():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        sample_ids = sidecar.get("sample_ids")
    result = project_embeddings(
        embeddings, sample_ids=sample_ids, perplexity=args.perplexity, seed=args.seed
    )
    export_projection_csv(result, args.out)
    print(f"{len(result.sample_ids)} points ({result.implementation}) -> {args.out}")
    return 0


# ------------------------------------------------------------------ synth

def _cmd_synth(args: argparse.Namespace) -> int:
    fractions = tuple(float(x) for x in args.nok_fractions.split(","))
    config = SynthConfig(
        n_samples=args.n_samples,
        image_size=args.image_size,
        seed=args.seed,
        nok_fraction_per_group=fractions,
        texture_strength=args.texture_strength,
        defect_strength=args.defect_strength,
        noise_std=args.noise_std,
    )
    dataset = generate_dataset(config)
    manifest_path = save_dataset(dataset, args.out)
    counts = {label: 0 for label in LABELS}
    for record in dataset.records:
        counts[record.label] += 1
    print(
        f"{config.n_samples} samples ({counts[LABEL_OK]} ok / {counts[LABEL_NOK]} nok) "
        f"-> {manifest_path}"
    )
    return 0


# ------------------------------------------------------------------ wiring

def build_parser() -> _Parser:
    parser = _Parser(
        prog=PROG,
        description="Quality-inspection training and evaluation under distribution shift.",
    )
    commands = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    ingest = commands.add_parser("ingest", help="cut source images into labeled patches")
    ingest.add_argument("--src", required=True, help="directory with images and sources.jsonl")
    ingest.add_argument("--out", required=True, help="manifest path to write")
    ingest.add_argument("--patch-size", type=int, default=128, dest="patch_size")
    ingest.add_argument("--patch-dir", dest="patch_dir", help="where patch PNGs go")
    ingest.set_defaults(func=_cmd_ingest)

    summarize_p = commands.add_parser("summarize", help="label and group statistics of a manifest")
    summarize_p.add_argument("--manifest", required=True)
    summarize_p.add_argument("--out", help="write JSON here instead of stdout")
    summarize_p.set_defaults(func=_cmd_summarize)

    split = commands.add_parser("split", help="build or verify cross-validation split plans")
    split.add_argument("--manifest")
    split.add_argument("--strategy", help="s1 random, s2 acquisition, s3 part, s4 category")
    split.add_argument("--folds", type=int)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", help="plan path to write")
    split.set_defaults(func=_cmd_split)
    split_sub = split.add_subparsers(dest="split_cmd", parser_class=_Parser)
    split_verify = split_sub.add_parser("verify", help="check a plan against a manifest")
    split_verify.add_argument("--manifest", required=True)
    split_verify.add_argument("--plan", required=True)
    split_verify.set_defaults(func=_cmd_split_verify)

    train = commands.add_parser("train", help="cross-validated training per a split plan")
    train.add_argument("--manifest", required=True)
    train.add_argument("--plan", required=True)
    train.add_argument("--out-dir", required=True, dest="out_dir")
    train.add_argument("--root", help="image root (default: SHIFTFORGE_DATA_DIR or manifest dir)")
    _add_train_overrides(train)
    train.set_defaults(func=_cmd_train)

    eval_p = commands.add_parser("eval", help="score a saved checkpoint on one fold's test set")
    eval_p.add_argument("--manifest", required=True)
    eval_p.add_argument("--plan", required=True)
    eval_p.add_argument("--fold", type=int, required=True)
    eval_p.add_argument("--model", required=True, help="checkpoint file (model.pt)")
    eval_p.add_argument("--root")
    eval_p.add_argument("--out", help="write the fold metrics JSON here")
    _add_train_overrides(eval_p)
    eval_p.set_defaults(func=_cmd_eval)

    compare = commands.add_parser("compare", help="fold-by-fold F1 deltas of two runs")
    compare.add_argument("run_a", help="run directory or report.json")
    compare.add_argument("run_b", help="run directory or report.json")
    compare.add_argument("--out", help="write the comparison JSON here")
    compare.set_defaults(func=_cmd_compare)

    loss_check = commands.add_parser(
        "loss-check", help="run the loss oracle and gradient checks, print max errors"
    )
    loss_check.add_argument("--batches", type=int, default=200)
    loss_check.add_argument("--seed", type=int, default=0)
    loss_check.set_defaults(func=_cmd_loss_check)

    review = commands.add_parser("review", help="label-review loop: queue, serve, apply")
    review_sub = review.add_subparsers(dest="review_cmd", parser_class=_Parser, required=True)

    build_queue = review_sub.add_parser("build-queue", help="select samples worth reviewing")
    build_queue.add_argument("--manifest", required=True)
    build_queue.add_argument(
        "--predictions",
        required=True,
        nargs="+",
        help="run directory or predictions.jsonl; several sources average into an ensemble",
    )
    build_queue.add_argument(
        "--mode", required=True, choices=[m.replace("_", "-") for m in REVIEW_MODES]
    )
    build_queue.add_argument("--threshold", type=float, default=DEFAULT_CONFIDENCE_THRESHOLD)
    build_queue.add_argument("--out", required=True)
    build_queue.set_defaults(func=_cmd_review_build_queue)

    serve = review_sub.add_parser("serve", help="host the queue over HTTP for review")
    serve.add_argument("--queue", required=True)
    serve.add_argument("--manifest", required=True)
    serve.add_argument("--decisions", required=True, help="append-only decisions JSONL")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--root")
    serve.add_argument("--ui-dir", dest="ui_dir", help="static front-end files to serve at /")
    serve.set_defaults(func=_cmd_review_serve)

    apply_p = review_sub.add_parser("apply", help="apply recorded decisions to a manifest")
    apply_p.add_argument("--manifest", required=True)
    apply_p.add_argument("--decisions", required=True)
    apply_p.add_argument("--out", required=True, help="revised manifest path")
    apply_p.add_argument("--change-log", dest="change_log", help="write old->new JSONL here")
    apply_p.set_defaults(func=_cmd_review_apply)

    explain = commands.add_parser("explain", help="activation maps and embedding projections")
    explain_sub = explain.add_subparsers(dest="explain_cmd", parser_class=_Parser, required=True)

    gradcam_p = explain_sub.add_parser("gradcam", help="class-activation heatmaps for samples")
    gradcam_p.add_argument("--model", required=True, help="checkpoint file (model.pt)")
    gradcam_p.add_argument("--manifest", required=True)
    gradcam_p.add_argument("--samples", required=True, help="comma-separated sample_ids")
    gradcam_p.add_argument("--out-dir", required=True, dest="out_dir")
    gradcam_p.add_argument("--root")
    gradcam_p.add_argument("--layer", help="dotted layer name; default per backbone")
    gradcam_p.add_argument(
        "--target-class",
        default="auto",
        choices=("auto", LABEL_OK, LABEL_NOK),
        dest="target_class",
        help="class whose score is explained; auto = the model's prediction",
    )
    _add_train_overrides(gradcam_p)
    gradcam_p.set_defaults(func=_cmd_explain_gradcam)

    project = explain_sub.add_parser("project", help="t-SNE projection of stored embeddings")
    project.add_argument(
        "--embeddings", required=True, help="fold directory or embeddings .npy file"
    )
    project.add_argument("--perplexity", type=float, default=30.0)
    project.add_argument("--seed", type=int, default=0)
    project.add_argument("--out", required=True, help="CSV path (sample_id,x,y)")
    project.set_defaults(func=_cmd_explain_project)

    synth = commands.add_parser("synth", help="generate the synthetic group-shift dataset")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--n-samples", type=int, default=2000, dest="n_samples")
    synth.add_argument("--image-size", type=int, default=32, dest="image_size")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument(
        "--nok-fractions",
        default="0.8,0.65,0.35,0.2",
        dest="nok_fractions",
        help="per-group defect fraction, comma-separated, one per group",
    )
    synth.add_argument("--texture-strength", type=float, default=0.25, dest="texture_strength")
    synth.add_argument("--defect-strength", type=float, default=0.5, dest="defect_strength")
    synth.add_argument("--noise-std", type=float, default=0.06, dest="noise_std")
    synth.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ShiftForgeError, ValueError, FileNotFoundError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"{PROG}: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
