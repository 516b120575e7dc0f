"""Sample-size sweeps and audit report emission.

The machine format is JSON lines, one object per line with a ``type`` key:

* ``metadata``: dataset id, config, sample sizes, protocols;
* ``reliability``: the reliability table used by the error-aware protocol;
* ``metric``: descriptive diversity measures of one attribute at one size;
* ``cell``: one hypothesis outcome (median p-values and decision).

Keys are sorted and no wall-clock data is written, so identical inputs give
byte-identical files. The markdown table is rendered from the cells alone.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .data_model import (
    ATTRIBUTES,
    GENDER,
    AnnotatedRecord,
    AttributeKind,
    ReferenceDistribution,
    dump_references,
    subsample,
    validate_for_audit,
    working_labels,
)
from .diversity import category_volume, conditional_entropy, diversity_loss
from .error_aware import (
    REPRESENTATION_TARGETS,
    AuditCell,
    AuditConfig,
    Decision,
    ReliabilityTable,
    run_parity_audit,
    run_representation_audit,
)
from .stat_tests import TestKind

DEFAULT_SIZES = (100, 500, 1000, 3000, 8000)
PROTOCOLS = ("error_aware", "naive")


def effective_sizes(sizes: Sequence[int], n_records: int) -> list[int]:
    """Sorted unique sizes, with sizes above the dataset size capped to it."""
    if any(s < 1 for s in sizes):
        raise ValueError("sample sizes must be positive")
    return sorted({min(int(s), n_records) for s in sizes})


@dataclass
class AuditReport:
    metadata: dict
    cells: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    reliability: dict | None = None

    def grid(self, protocol: str = "error_aware") -> dict:
        return {
            (c.hypothesis, c.attribute, c.modality, c.sample_size): c
            for c in self.cells
            if c.protocol == protocol
        }


def _metrics_for(records, attr, reference, size) -> dict:
    labels, _ = working_labels(records, attr)
    freq = np.bincount(labels, minlength=attr.cardinality) / labels.size
    out = {
        "type": "metric",
        "attribute": attr.value,
        "sample_size": size,
        "frequencies": [float(f) for f in freq],
        "entropy": conditional_entropy(freq),
        "geometric_diversity": category_volume(freq),
    }
    if reference is not None:
        out["diversity_loss"] = diversity_loss(reference.probabilities, freq)
    return out


def run_audit(
    records: Sequence[AnnotatedRecord],
    references: Mapping[AttributeKind, ReferenceDistribution],
    reliability: ReliabilityTable,
    config: AuditConfig,
    sizes: Sequence[int] = DEFAULT_SIZES,
    ablation: bool = False,
    dataset_id: str = "dataset",
) -> AuditReport:
    """Parity audits of every referenced attribute and representation audits
    of age and Fitzpatrick given gender, at each sample size.

    With ``ablation`` the naive protocol (no error correction) runs too, on
    the same subsamples and simulation seeds.
    """
    validate_for_audit(records, ATTRIBUTES)
    if not records:
        raise ValueError("no records to audit")
    sizes = effective_sizes(sizes, len(records))
    protocols = PROTOCOLS if ablation else PROTOCOLS[:1]
    report = AuditReport(
        metadata={
            "type": "metadata",
            "dataset_id": dataset_id,
            "n_records": len(records),
            "sample_sizes": sizes,
            "protocols": list(protocols),
            "config": config.to_json(),
            "references": dump_references(references),
            "version": __version__,
        },
        reliability=reliability.to_json(),
    )
    perfect = ReliabilityTable.perfect_predictor()
    for size in sizes:
        sub = list(records) if size == len(records) else subsample(records, size, [config.rng_seed, size])
        for attr in ATTRIBUTES:
            report.metrics.append(_metrics_for(sub, attr, references.get(attr), size))
        for protocol in protocols:
            rel = reliability if protocol == "error_aware" else perfect
            cells = []
            for attr in ATTRIBUTES:
                if attr in references:
                    cells += run_parity_audit(sub, attr, references[attr], rel, config,
                                              seed_key=(size, 0, attr.index))
            for attr in REPRESENTATION_TARGETS:
                cells += run_representation_audit(sub, attr, rel, config, seed_key=(size, 1, attr.index))
            report.cells += [replace(c, sample_size=size, protocol=protocol) for c in cells]
    return report


# -- serialization -----------------------------------------------------------

def cell_to_json(cell: AuditCell) -> dict:
    return {
        "type": "cell",
        "protocol": cell.protocol,
        "hypothesis": cell.hypothesis,
        "attribute": cell.attribute.value,
        "modality": cell.label,
        "conditioning": None if cell.conditioning is None else cell.conditioning.value,
        "sample_size": cell.sample_size,
        "p_values": {TestKind(k).value: v for k, v in cell.p_values.items()},
        "decision": cell.decision.value,
    }


def cell_from_json(d: Mapping) -> AuditCell:
    attr = AttributeKind.parse(d["attribute"])
    cond = d.get("conditioning")
    return AuditCell(
        hypothesis=d["hypothesis"],
        attribute=attr,
        modality=attr.parse_modality(d["modality"]),
        p_values={TestKind(k): float(v) for k, v in d["p_values"].items()},
        decision=Decision(d["decision"]),
        conditioning=None if cond is None else AttributeKind.parse(cond),
        sample_size=d.get("sample_size"),
        protocol=d.get("protocol", "error_aware"),
    )


def to_jsonl(report: AuditReport) -> str:
    lines = [report.metadata]
    if report.reliability is not None:
        lines.append({"type": "reliability", **report.reliability})
    lines += report.metrics
    lines += [cell_to_json(c) for c in report.cells]
    return "".join(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n" for obj in lines)


def from_jsonl(text: str) -> AuditReport:
    report = AuditReport(metadata={})
    for raw in text.splitlines():
        if not raw.strip():
            continue
        obj = json.loads(raw)
        kind = obj.get("type")
        if kind == "metadata":
            report.metadata = obj
        elif kind == "reliability":
            report.reliability = {k: v for k, v in obj.items() if k != "type"}
        elif kind == "metric":
            report.metrics.append(obj)
        elif kind == "cell":
            report.cells.append(cell_from_json(obj))
        else:
            raise ValueError(f"unknown report line type {kind!r}")
    return report


# -- human table -------------------------------------------------------------

LEGEND = "✓, ✓₂/₃ and × mean that 0, 1 or at least 2 tests rejected H0."


def render_markdown(report: AuditReport, protocol: str | None = None) -> str:
    """Markdown tables with one row per modality and
    one column per sample size. Uses only the stored decisions."""
    protocols = [protocol] if protocol else list(report.metadata.get("protocols", ["error_aware"]))
    sizes = sorted({c.sample_size for c in report.cells})
    out = [f"# Audit report: {report.metadata.get('dataset_id', '')}", ""]
    alpha = report.metadata.get("config", {}).get("alpha")
    if alpha is not None:
        out += [f"Level alpha = {alpha}. {LEGEND}", ""]
    for proto in protocols:
        grid = report.grid(proto)
        title = "error-aware" if proto == "error_aware" else "naive (no error correction)"
        for hypothesis, heading in (("parity", "Parity tests"), ("representation", "Equal representation given gender")):
            attrs = [a for a in ATTRIBUTES if any(k[0] == hypothesis and k[1] is a for k in grid)]
            if not attrs:
                continue
            out += [f"## {heading} ({title})", ""]
            out.append("| Sensitive variable | " + " | ".join(str(s) for s in sizes) + " |")
            out.append("|---|" + "---|" * len(sizes))
            for attr in attrs:
                if attr is GENDER and hypothesis == "parity":
                    # binary attribute: both one-vs-all cells carry the same test
                    row = [grid.get((hypothesis, attr, 0, s)) for s in sizes]
                    out.append(f"| **{attr.value.capitalize()}** | " + " | ".join(_glyph(c) for c in row) + " |")
                    continue
                out.append(f"| **{attr.value.capitalize()}** |" + " |" * len(sizes))
                for m, name in enumerate(attr.modalities):
                    row = [grid.get((hypothesis, attr, m, s)) for s in sizes]
                    out.append(f"| {name} | " + " | ".join(_glyph(c) for c in row) + " |")
            out.append("")
    if report.metrics:
        out += ["## Descriptive diversity", ""]
        out.append("| Attribute | Size | Diversity loss | Entropy | Geometric diversity |")
        out.append("|---|---|---|---|---|")
        for m in report.metrics:
            loss = m.get("diversity_loss")
            loss_text = "" if loss is None else f"{loss:.4f}"
            out.append(f"| {m['attribute']} | {m['sample_size']} | {loss_text} | "
                       f"{m['entropy']:.4f} | {m['geometric_diversity']:.4g} |")
        out.append("")
    return "\n".join(out)


def _glyph(cell: AuditCell | None) -> str:
    return "" if cell is None else cell.decision.glyph


def write_atomic(path: str | Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
