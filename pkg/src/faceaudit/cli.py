"""Command-line interface: ``faceaudit <command> [options]``.

Commands: audit, synth, extract-ita, reliability, report, surprising.
Shared options (--seed, --alpha, --sims, --sizes, --ablation, ...) are
accepted by every command. FACEAUDIT_SEED overrides the default seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .colorimetry import SUMMARY_COLUMNS, extract_skin_summary, summary_row, surprising_scores
from .data_model import (
    AGE,
    FITZPATRICK,
    Split,
    default_references,
    load_annotations,
    load_references,
    save_annotations,
)
from .error_aware import AuditConfig, ReliabilityTable, adjacent_accuracy, estimate_reliability
from .errors import AuditError, EmptyMask, NoImagesFound
from .report import DEFAULT_SIZES, from_jsonl, render_markdown, run_audit, to_jsonl, write_atomic
from .synth import SynthSpec, demo_spec, synth_generate

log = logging.getLogger("faceaudit")

SEED_ENV = "FACEAUDIT_SEED"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid size list {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return sizes


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")
    g.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    g.add_argument("--sims", type=int, default=101, help="simulations per cell, odd (default 101)")
    g.add_argument("--sizes", type=_sizes, default=list(DEFAULT_SIZES),
                   help="comma-separated sample sizes (default 100,500,1000,3000,8000)")
    g.add_argument("--ablation", action="store_true", help="also run the naive protocol")
    g.add_argument("--permutations", type=int, default=999, help="Wasserstein permutations (default 999)")
    g.add_argument("--order", type=float, default=1.0, help="Wasserstein order (default 1)")
    g.add_argument("--workers", type=int, default=1, help="simulation threads (default 1)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="faceaudit", description="Error-aware demographic bias audits for annotated face datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", parents=[common], help="run parity and representation audits")
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--schema", type=Path, help="JSON column map (logical field -> header)")
    p.add_argument("--references", type=Path, help="JSON reference distributions (default: census tables)")
    p.add_argument("--reliability", type=Path, help="JSON reliability table (default: estimate on validation split)")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--dataset-id", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic annotation file")
    p.add_argument("--spec", type=Path, help="JSON synthetic spec (default: unbiased census demo)")
    p.add_argument("--n", type=int, default=None, help="override the number of records")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract-ita", parents=[common], help="skin colour summaries from images and masks")
    p.add_argument("--images", required=True, type=Path)
    p.add_argument("--masks", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--skip-report", type=Path, help="where to list skipped images (default: <out>.skipped.csv)")
    p.add_argument("--k", type=int, default=3, help="K-means clusters (default 3)")
    p.add_argument("--radius", type=int, default=1, help="box blur radius (default 1)")
    p.set_defaults(func=cmd_extract_ita)

    p = sub.add_parser("reliability", parents=[common], help="estimate reliability on the validation split")
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--schema", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("report", parents=[common], help="render a machine report as a markdown table")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", type=Path, help="markdown output (default: stdout)")
    p.add_argument("--protocol", choices=["error_aware", "naive"], default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("surprising", parents=[common], help="flag ITA values unusual for their Fitzpatrick class")
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--schema", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_surprising)
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get(SEED_ENV, "0"))


def _config(args) -> AuditConfig:
    return AuditConfig(
        n_simulations=args.sims,
        alpha=args.alpha,
        rng_seed=_seed(args),
        wasserstein_order=args.order,
        n_permutations=args.permutations,
        workers=args.workers,
    )


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _records(args):
    schema = _load_json(args.schema) if args.schema else None
    return load_annotations(args.annotations, schema)


def cmd_audit(args) -> int:
    config = _config(args)
    if args.references is not None and not args.references.is_file():
        raise FileNotFoundError(f"reference distribution file not found: {args.references}")
    references = load_references(args.references) if args.references else default_references()
    records = _records(args)
    if args.reliability:
        reliability = ReliabilityTable.load(args.reliability)
    elif any(any(r.is_predicted) for r in records):
        reliability = estimate_reliability([r for r in records if r.split is Split.VALIDATION])
    else:
        reliability = ReliabilityTable.perfect_predictor()

    dataset_id = args.dataset_id or args.annotations.stem
    report = run_audit(records, references, reliability, config, args.sizes, args.ablation, dataset_id)
    machine, human = to_jsonl(report), render_markdown(report)
    # nothing is written until every computation has succeeded
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(args.out_dir / "report.jsonl", machine)
    write_atomic(args.out_dir / "report.md", human)
    print(human)
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        spec = SynthSpec.load(args.spec)
    else:
        spec = demo_spec(seed=_seed(args))
    if args.n is not None:
        spec.n = args.n
    if args.seed is not None or os.environ.get(SEED_ENV):
        spec.seed = _seed(args)
    records = synth_generate(spec)
    save_annotations(records, args.out)
    log.info("wrote %d records to %s", len(records), args.out)
    return 0


def _read_raster(path: Path, mode: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert(mode))


def cmd_extract_ita(args) -> int:
    images = sorted(p for p in args.images.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) \
        if args.images.is_dir() else []
    if not images:
        raise NoImagesFound(f"no images found in {args.images}")
    masks = {p.stem: p for p in args.masks.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES} \
        if args.masks.is_dir() else {}
    seed = _seed(args)

    rows, skipped = [], []
    for i, path in enumerate(images):
        mask_path = masks.get(path.stem)
        if mask_path is None:
            skipped.append((path.stem, "no matching mask"))
            continue
        try:
            summary = extract_skin_summary(_read_raster(path, "RGB"), _read_raster(mask_path, "L"),
                                           k=args.k, kernel_radius=args.radius, seed=seed + i)
        except EmptyMask:
            skipped.append((path.stem, "empty mask"))
            continue
        rows.append(summary_row(path.stem, summary))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows([r[0], r[1], *(repr(float(v)) for v in r[2:])] for r in rows)
    write_atomic(args.out, buf.getvalue())

    skip_path = args.skip_report or args.out.with_name(args.out.name + ".skipped.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "reason"])
    w.writerows(skipped)
    write_atomic(skip_path, buf.getvalue())
    for rid, reason in skipped:
        log.warning("skipped %s: %s", rid, reason)
    print(f"{len(rows)} summaries written to {args.out}, {len(skipped)} skipped")
    return 0


def cmd_reliability(args) -> int:
    records = [r for r in _records(args) if r.split is Split.VALIDATION]
    table = estimate_reliability(records)
    out = table.to_json()
    out["adjacent_accuracy"] = {a.value: adjacent_accuracy(records, a) for a in (AGE, FITZPATRICK)}
    out["n_validation"] = len(records)
    write_atomic(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out["adjacent_accuracy"], sort_keys=True))
    return 0


def cmd_report(args) -> int:
    report = from_jsonl(args.input.read_text(encoding="utf-8"))
    text = render_markdown(report, args.protocol)
    if args.out:
        write_atomic(args.out, text)
    else:
        print(text)
    return 0


def cmd_surprising(args) -> int:
    entries = []
    for r in _records(args):
        fitz = r.working_label(FITZPATRICK)
        if r.ita is not None and fitz is not None:
            entries.append((r.id, fitz, r.ita))
    flags = surprising_scores(entries)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "fitzpatrick", "ita", "z_score", "flagged"])
    for f in flags:
        w.writerow([f.id, FITZPATRICK.modalities[f.fitz_class], repr(f.ita), repr(f.z_score), int(f.flagged)])
    write_atomic(args.out, buf.getvalue())
    print(f"{sum(f.flagged for f in flags)} of {len(flags)} records flagged")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AuditError, OSError, ValueError, KeyError) as exc:
        print(f"faceaudit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
