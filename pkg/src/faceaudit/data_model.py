"""Annotation schema, attribute taxonomies, dataset ingestion and subsampling.

Gender follows the binary taxonomy of the released annotations (Men, Women).
This is a limited view of gender: it is the closest binary reflection an
annotator or classifier assigns to a face, not a statement about the person.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    InvalidDistribution,
    MalformedRow,
    MissingColumn,
    MissingLabel,
    SampleTooLarge,
    UnknownModality,
)


class AttributeKind(enum.Enum):
    GENDER = "gender"
    AGE = "age"
    FITZPATRICK = "fitzpatrick"

    @property
    def modalities(self) -> tuple[str, ...]:
        return _MODALITIES[self]

    @property
    def cardinality(self) -> int:
        return len(_MODALITIES[self])

    @property
    def ordered(self) -> bool:
        return self is not AttributeKind.GENDER

    @property
    def index(self) -> int:
        return _ATTR_INDEX[self]

    @classmethod
    def parse(cls, text: str) -> "AttributeKind":
        key = text.strip().lower()
        aliases = {"fitz": cls.FITZPATRICK, "sex": cls.GENDER}
        if key in aliases:
            return aliases[key]
        return cls(key)

    def parse_modality(self, text: str) -> int:
        """Resolve a modality string (case-insensitive) to its index.

        Raises KeyError when the string is not part of the taxonomy.
        """
        return _LOOKUP[self][text.strip().lower()]


GENDER, AGE, FITZPATRICK = AttributeKind.GENDER, AttributeKind.AGE, AttributeKind.FITZPATRICK
ATTRIBUTES = (GENDER, AGE, FITZPATRICK)

_MODALITIES = {
    GENDER: ("Men", "Women"),
    AGE: ("0-2", "3-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70+"),
    # classes III and IV are merged by the annotation protocol
    FITZPATRICK: ("I", "II", "III-IV", "V", "VI"),
}
_ATTR_INDEX = {a: i for i, a in enumerate(ATTRIBUTES)}

_LOOKUP: dict[AttributeKind, dict[str, int]] = {
    a: {m.lower(): i for i, m in enumerate(mods)} for a, mods in _MODALITIES.items()
}
_LOOKUP[GENDER].update({"man": 0, "male": 0, "m": 0, "woman": 1, "female": 1, "w": 1, "f": 1})
_LOOKUP[AGE].update({"more than 70": 8, "70-": 8})
_LOOKUP[FITZPATRICK].update({"iii": 2, "iv": 2, "iii - iv": 2, "iii/iv": 2})


class Split(enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"
    UNLABELED = "unlabeled"

    @classmethod
    def parse(cls, text: str) -> "Split":
        key = text.strip().lower()
        aliases = {"val": "validation", "valid": "validation", "unlabelled": "unlabeled", "": "unlabeled"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class AnnotatedRecord:
    """One image's manual and predicted labels for the three attributes.

    Labels are modality indices stored in attribute order (gender, age,
    fitzpatrick). ``is_predicted`` marks, per attribute, whether the audit
    consumes the predicted label rather than the manual one.
    """

    id: str
    split: Split = Split.UNLABELED
    manual: tuple = (None, None, None)
    predicted: tuple = (None, None, None)
    is_predicted: tuple = (False, False, False)
    ita: float | None = None

    def __post_init__(self):
        for name in ("manual", "predicted", "is_predicted"):
            value = tuple(getattr(self, name))
            if len(value) != 3:
                raise ValueError(f"{name} must have one entry per attribute")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "is_predicted", tuple(bool(v) for v in self.is_predicted))
        for attr in ATTRIBUTES:
            for label in (self.manual[attr.index], self.predicted[attr.index]):
                if label is not None and not 0 <= label < attr.cardinality:
                    raise ValueError(f"{attr.value} index {label} out of range for record {self.id!r}")

    def manual_label(self, attr: AttributeKind) -> int | None:
        return self.manual[attr.index]

    def predicted_label(self, attr: AttributeKind) -> int | None:
        return self.predicted[attr.index]

    def uses_prediction(self, attr: AttributeKind) -> bool:
        return self.is_predicted[attr.index]

    def label(self, attr: AttributeKind, use_predicted: bool) -> int | None:
        return self.predicted_label(attr) if use_predicted else self.manual_label(attr)

    def working_label(self, attr: AttributeKind) -> int | None:
        """The label an audit consumes: predicted when flagged, manual otherwise."""
        return self.label(attr, self.uses_prediction(attr))


@dataclass(frozen=True)
class BinarizedView:
    attribute: AttributeKind
    target_modality: int
    values: np.ndarray = field(repr=False)

    def complement(self) -> "BinarizedView":
        return BinarizedView(self.attribute, self.target_modality, 1 - self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ReferenceDistribution:
    attribute: AttributeKind
    probabilities: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probabilities)
        if len(probs) != self.attribute.cardinality:
            raise InvalidDistribution(
                f"{self.attribute.value} reference needs {self.attribute.cardinality} entries, got {len(probs)}"
            )
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise InvalidDistribution("reference probabilities must be finite and non-negative")
        if abs(math.fsum(probs) - 1.0) > 1e-9:
            raise InvalidDistribution(f"{self.attribute.value} reference sums to {math.fsum(probs)}, expected 1")
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_weights(cls, attribute: AttributeKind, weights: Sequence[float]) -> "ReferenceDistribution":
        """Normalize non-negative weights (e.g. rounded census percentages)."""
        total = math.fsum(weights)
        if total <= 0:
            raise InvalidDistribution("weights must have a positive sum")
        return cls(attribute, tuple(w / total for w in weights))

    def __getitem__(self, modality: int) -> float:
        return self.probabilities[modality]


# World-census reference distributions, in percent. The age row is published
# rounded and sums to 102, so it is normalized.
REFERENCE_PERCENTAGES = {
    GENDER: (50, 50),
    AGE: (2, 12, 17, 17, 15, 13, 11, 8, 7),
    FITZPATRICK: (4, 15, 50, 19, 12),
}


def default_references() -> dict[AttributeKind, ReferenceDistribution]:
    return {a: ReferenceDistribution.from_weights(a, w) for a, w in REFERENCE_PERCENTAGES.items()}


def load_references(path: str | Path) -> dict[AttributeKind, ReferenceDistribution]:
    """Read reference distributions from JSON keyed by attribute name.

    Each value is either a list of probabilities summing to one, or an object
    ``{"weights": [...]}`` that is normalized (for published percentages).
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    refs = {}
    for key, value in raw.items():
        attr = AttributeKind.parse(key)
        if isinstance(value, Mapping):
            refs[attr] = ReferenceDistribution.from_weights(attr, value["weights"])
        else:
            refs[attr] = ReferenceDistribution(attr, tuple(value))
    return refs


def dump_references(refs: Mapping[AttributeKind, ReferenceDistribution]) -> dict:
    return {a.value: list(r.probabilities) for a, r in refs.items()}


# -- ingestion ---------------------------------------------------------------

DEFAULT_SCHEMA = {
    "id": "id",
    "split": "split",
    "gender_manual": "gender_manual",
    "gender_pred": "gender_pred",
    "age_manual": "age_manual",
    "age_pred": "age_pred",
    "fitzpatrick_manual": "fitzpatrick_manual",
    "fitzpatrick_pred": "fitzpatrick_pred",
    "is_predicted": "is_predicted",
}

# Everything a record carries; used when writing annotations so that a
# written file reloads to equal records.
FULL_SCHEMA = {
    "id": "id",
    "split": "split",
    **{f"{a.value}_{kind}": f"{a.value}_{kind}" for a in ATTRIBUTES for kind in ("manual", "pred")},
    **{f"{a.value}_is_predicted": f"{a.value}_is_predicted" for a in ATTRIBUTES},
    "ita": "ita",
}

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def _parse_bool(text: str, line: int) -> bool | None:
    key = text.strip().lower()
    if key == "":
        return None
    if key in _TRUE:
        return True
    if key in _FALSE:
        return False
    raise MalformedRow(line, f"cannot read {text!r} as a boolean")


def load_annotations(path: str | Path, schema: Mapping[str, str] | None = None) -> list[AnnotatedRecord]:
    """Load one AnnotatedRecord per data row of a comma-separated file.

    ``schema`` maps logical fields (``id``, ``split``, ``<attr>_manual``,
    ``<attr>_pred``, ``is_predicted``, ``<attr>_is_predicted``, ``ita``) to
    header names. Every mapped column must be present. When omitted, logical
    names are looked up directly in the header and missing ones are skipped.
    Empty cells become absent labels. When no prediction flag is given for an
    attribute, the prediction is consumed iff the manual label is absent.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow(1, "missing header row") from None
        if schema is None:
            schema = {k: k for k in FULL_SCHEMA if k in header}
            if "is_predicted" in header:
                schema["is_predicted"] = "is_predicted"
            if "id" not in schema:
                raise MissingColumn("id")
        positions = {}
        for logical, column in schema.items():
            if column not in header:
                raise MissingColumn(column)
            positions[logical] = header.index(column)

        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            records.append(_parse_row(row, positions, schema, line))
    return records


def _parse_row(row, positions, schema, line) -> AnnotatedRecord:
    def cell(key):
        return row[positions[key]].strip() if key in positions else ""

    rid = cell("id")
    if not rid:
        raise MalformedRow(line, "empty id")
    try:
        split = Split.parse(cell("split"))
    except ValueError:
        raise MalformedRow(line, f"unknown split {cell('split')!r}") from None

    manual, predicted, flags = [], [], []
    shared_flag = _parse_bool(cell("is_predicted"), line)
    for attr in ATTRIBUTES:
        labels = []
        for kind in ("manual", "pred"):
            key = f"{attr.value}_{kind}"
            text = cell(key)
            if not text:
                labels.append(None)
                continue
            try:
                labels.append(attr.parse_modality(text))
            except KeyError:
                raise UnknownModality(line, schema[key], text) from None
        manual.append(labels[0])
        predicted.append(labels[1])
        flag = _parse_bool(cell(f"{attr.value}_is_predicted"), line)
        if flag is None:
            flag = shared_flag
        if flag is None:
            flag = labels[0] is None
        flags.append(flag)

    ita_text = cell("ita")
    try:
        ita = float(ita_text) if ita_text else None
    except ValueError:
        raise MalformedRow(line, f"cannot read ita value {ita_text!r}") from None
    return AnnotatedRecord(rid, split, tuple(manual), tuple(predicted), tuple(flags), ita)


def save_annotations(records: Iterable[AnnotatedRecord], path: str | Path) -> None:
    columns = list(FULL_SCHEMA.values())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in records:
            row = [r.id, r.split.value]
            for attr in ATTRIBUTES:
                for label in (r.manual_label(attr), r.predicted_label(attr)):
                    row.append("" if label is None else attr.modalities[label])
            row.extend("1" if f else "0" for f in r.is_predicted)
            row.append("" if r.ita is None else repr(float(r.ita)))
            writer.writerow(row)


def subsample(records: Sequence[AnnotatedRecord], n: int, seed: int) -> list[AnnotatedRecord]:
    """Uniform sample of ``n`` records without replacement, in input order."""
    if n < 0 or n > len(records):
        raise SampleTooLarge(f"cannot draw {n} records from {len(records)}")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(records), size=n, replace=False))
    return [records[i] for i in chosen]


def binarize(
    records: Sequence[AnnotatedRecord],
    attribute: AttributeKind,
    target_modality: int,
    use_predicted: bool,
) -> BinarizedView:
    values = np.empty(len(records), dtype=np.int8)
    for i, r in enumerate(records):
        label = r.label(attribute, use_predicted)
        if label is None:
            raise MissingLabel(r.id, attribute.value)
        values[i] = label == target_modality
    return BinarizedView(attribute, target_modality, values)


def working_labels(records: Sequence[AnnotatedRecord], attribute: AttributeKind) -> tuple[np.ndarray, np.ndarray]:
    """Arrays of (labels consumed by the audit, prediction flags) for one attribute."""
    labels = np.empty(len(records), dtype=np.int64)
    flags = np.empty(len(records), dtype=bool)
    for i, r in enumerate(records):
        label = r.working_label(attribute)
        if label is None:
            raise MissingLabel(r.id, attribute.value)
        labels[i] = label
        flags[i] = r.uses_prediction(attribute)
    return labels, flags


def validate_for_audit(records: Sequence[AnnotatedRecord], attributes: Iterable[AttributeKind]) -> None:
    """Check the audit preconditions on labels for the given attributes."""
    attributes = tuple(attributes)
    for r in records:
        for attr in attributes:
            if r.working_label(attr) is None:
                raise MissingLabel(r.id, attr.value)
            if r.split in (Split.TRAIN, Split.VALIDATION) and r.manual_label(attr) is None:
                raise MissingLabel(r.id, f"{attr.value} (manual, required on {r.split.value} split)")
