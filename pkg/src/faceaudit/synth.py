"""Synthetic annotated datasets with known bias and known label noise."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data_model import (
    ATTRIBUTES,
    GENDER,
    REFERENCE_PERCENTAGES,
    AnnotatedRecord,
    AttributeKind,
    Split,
)
from .errors import InvalidSpec


def symmetric_confusion(k: int, accuracy: float) -> np.ndarray:
    """Confusion matrix with ``accuracy`` on the diagonal, errors spread evenly."""
    if k == 1:
        return np.ones((1, 1))
    m = np.full((k, k), (1.0 - accuracy) / (k - 1))
    np.fill_diagonal(m, accuracy)
    return m


@dataclass
class AttributeSpec:
    marginal: np.ndarray
    confusion: np.ndarray
    by_gender: np.ndarray | None = None  # (2, K): distribution given true gender


@dataclass
class SynthSpec:
    n: int
    attributes: dict = field(default_factory=dict)
    fraction_manual: float = 0.2
    validation_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise InvalidSpec("n must be non-negative")
        if not 0.0 <= self.fraction_manual <= 1.0:
            raise InvalidSpec("fraction_manual must lie in [0, 1]")
        if not 0.0 <= self.validation_fraction <= 1.0:
            raise InvalidSpec("validation_fraction must lie in [0, 1]")
        for attr in ATTRIBUTES:
            if attr not in self.attributes:
                raise InvalidSpec(f"missing distribution for {attr.value}")
            a = self.attributes[attr]
            k = attr.cardinality
            _check_distribution(a.marginal, k, f"{attr.value} marginal")
            if a.confusion.shape != (k, k):
                raise InvalidSpec(f"{attr.value} confusion matrix must be {k}x{k}")
            for row in a.confusion:
                _check_distribution(row, k, f"{attr.value} confusion row")
            if a.by_gender is not None:
                if attr is GENDER:
                    raise InvalidSpec("gender cannot be conditioned on itself")
                if a.by_gender.shape != (GENDER.cardinality, k):
                    raise InvalidSpec(f"{attr.value} gender-conditional table must be 2x{k}")
                for row in a.by_gender:
                    _check_distribution(row, k, f"{attr.value} gender-conditional row")

    @classmethod
    def from_json(cls, data: Mapping) -> "SynthSpec":
        """Parse a spec; a confusion may be a matrix or ``{"accuracy": a}``."""
        try:
            attrs = {}
            raw = data.get("attributes", {})
            for attr in ATTRIBUTES:
                entry = raw.get(attr.value, {})
                marginal = np.asarray(entry.get("marginal", _default_marginal(attr)), dtype=float)
                conf = entry.get("confusion", {"accuracy": 1.0})
                if isinstance(conf, Mapping):
                    conf = symmetric_confusion(attr.cardinality, float(conf["accuracy"]))
                by_gender = entry.get("by_gender")
                if isinstance(by_gender, Mapping):
                    by_gender = [by_gender[g] for g in GENDER.modalities]
                attrs[attr] = AttributeSpec(
                    marginal,
                    np.asarray(conf, dtype=float),
                    None if by_gender is None else np.asarray(by_gender, dtype=float),
                )
            return cls(
                n=int(data["n"]),
                attributes=attrs,
                fraction_manual=float(data.get("fraction_manual", 0.2)),
                validation_fraction=float(data.get("validation_fraction", 0.5)),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"cannot parse synthetic spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        attrs = {}
        for attr, a in self.attributes.items():
            entry = {"marginal": a.marginal.tolist(), "confusion": a.confusion.tolist()}
            if a.by_gender is not None:
                entry["by_gender"] = {g: row.tolist() for g, row in zip(GENDER.modalities, a.by_gender)}
            attrs[attr.value] = entry
        return {
            "n": self.n,
            "seed": self.seed,
            "fraction_manual": self.fraction_manual,
            "validation_fraction": self.validation_fraction,
            "attributes": attrs,
        }


def _default_marginal(attr: AttributeKind) -> np.ndarray:
    w = np.asarray(REFERENCE_PERCENTAGES[attr], dtype=float)
    return w / w.sum()


def _check_distribution(p, k, what):
    p = np.asarray(p, dtype=float)
    if p.shape != (k,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidSpec(f"{what} must be {k} non-negative probabilities summing to 1")


def demo_spec(n: int = 10_000, accuracy: float = 1.0, fraction_manual: float = 0.2, seed: int = 0) -> SynthSpec:
    """Unbiased dataset drawn from the census references, symmetric noise."""
    attrs = {
        a: AttributeSpec(_default_marginal(a), symmetric_confusion(a.cardinality, accuracy))
        for a in ATTRIBUTES
    }
    return SynthSpec(n, attrs, fraction_manual=fraction_manual, seed=seed)


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws; ``probs`` is (K,) or (n, K)."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[..., -1] = 1.0
    if cdf.ndim == 1:
        return np.searchsorted(cdf, u, side="right")
    return (u[:, None] >= cdf).sum(axis=1)


def synth_generate(spec: SynthSpec) -> list[AnnotatedRecord]:
    """Draw true labels, noisy predictions and split membership.

    Gender is drawn first; attributes with a gender-conditional table are
    then drawn given the true gender. Predictions come from the confusion
    row of the true label. Manual records are split between validation and
    train; the rest are test records whose audits use the predictions. True
    labels are kept as manual labels on every record.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    true = {}
    for attr in ATTRIBUTES:
        a = spec.attributes[attr]
        u = rng.random(n)
        if a.by_gender is not None:
            true[attr] = _draw(a.by_gender[true[GENDER]], u)
        else:
            true[attr] = _draw(a.marginal, u)
    pred = {}
    for attr in ATTRIBUTES:
        conf = spec.attributes[attr].confusion
        pred[attr] = _draw(conf[true[attr]], rng.random(n))
    manual = rng.random(n) < spec.fraction_manual
    validation = rng.random(n) < spec.validation_fraction

    width = len(str(max(n - 1, 0)))
    records = []
    for i in range(n):
        if manual[i]:
            split = Split.VALIDATION if validation[i] else Split.TRAIN
        else:
            split = Split.TEST
        records.append(AnnotatedRecord(
            id=f"synth{i:0{width}d}",
            split=split,
            manual=tuple(int(true[a][i]) for a in ATTRIBUTES),
            predicted=tuple(int(pred[a][i]) for a in ATTRIBUTES),
            is_predicted=(not manual[i],) * 3,
        ))
    return records

