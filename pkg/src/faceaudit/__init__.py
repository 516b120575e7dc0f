"""Uncertainty-aware demographic bias auditing for face-image datasets."""

__version__ = "0.1.0"

from .data_model import (  # noqa: E402
    AGE,
    ATTRIBUTES,
    FITZPATRICK,
    GENDER,
    AnnotatedRecord,
    AttributeKind,
    BinarizedView,
    ReferenceDistribution,
    Split,
    binarize,
    default_references,
    load_annotations,
    save_annotations,
    subsample,
)
from .error_aware import (  # noqa: E402
    AuditCell,
    AuditConfig,
    Decision,
    ReliabilityTable,
    aggregate_decision,
    estimate_reliability,
    run_parity_audit,
    run_representation_audit,
)
from .report import AuditReport, from_jsonl, render_markdown, run_audit, to_jsonl  # noqa: E402
