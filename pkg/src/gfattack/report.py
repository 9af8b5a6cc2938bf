"""Attack reports: per-target records, aggregates, and a versioned JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

REPORT_FORMAT = "gfattack-report"
REPORT_VERSION = 1


@dataclass
class TargetRecord:
    target: int
    flips: list            # [[u, v, sign], ...]
    scores: list
    label: int
    clean_pred: int
    attacked_pred: int
    clean_test_accuracy: float
    attacked_test_accuracy: float
    disconnects_target: bool = False

    @property
    def clean_correct(self) -> bool:
        return self.clean_pred == self.label

    @property
    def attacked_correct(self) -> bool:
        return self.attacked_pred == self.label


def aggregate(records: list[TargetRecord]) -> dict:
    """Accuracy over the attacked targets, and over the whole test set.

    The test-set figures average, across targets, the test accuracy on the
    graph attacked for that target.
    """
    m = len(records)
    if m == 0:
        return {"n_targets": 0}
    clean = sum(r.clean_correct for r in records) / m
    attacked = sum(r.attacked_correct for r in records) / m
    clean_test = sum(r.clean_test_accuracy for r in records) / m
    attacked_test = sum(r.attacked_test_accuracy for r in records) / m
    return {
        "n_targets": m,
        "clean_accuracy": clean,
        "attacked_accuracy": attacked,
        "delta": attacked - clean,
        "clean_test_accuracy": clean_test,
        "attacked_test_accuracy": attacked_test,
        "test_delta": attacked_test - clean_test,
        "n_disconnecting": sum(r.disconnects_target for r in records),
    }


@dataclass
class AttackReport:
    config: dict
    model: str
    method: str
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def finalize(self) -> "AttackReport":
        self.aggregates = aggregate(self.records)
        return self

    @property
    def delta(self) -> float:
        return self.aggregates.get("delta", 0.0)

    def body(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "config": self.config,
            "model": self.model,
            "method": self.method,
            "records": [asdict(r) for r in self.records],
            "aggregates": self.aggregates,
        }

    def to_dict(self) -> dict:
        d = self.body()
        d["timing"] = self.timing
        return d

    def dumps(self, include_timing: bool = True) -> str:
        d = self.to_dict() if include_timing else self.body()
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AttackReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not an attack report")
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')}")
        recs = [TargetRecord(**r) for r in d["records"]]
        return cls(d["config"], d["model"], d["method"], recs, d["aggregates"], d.get("timing", {}))


def write_reports(reports: list[AttackReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": REPORT_FORMAT + "-bundle", "version": REPORT_VERSION,
               "reports": [r.to_dict() for r in reports]}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_reports(path) -> list[AttackReport]:
    d = json.loads(Path(path).read_text())
    if d.get("format") == REPORT_FORMAT:
        return [AttackReport.from_dict(d)]
    if d.get("format") != REPORT_FORMAT + "-bundle":
        raise ValueError(f"{path}: not an attack report")
    return [AttackReport.from_dict(r) for r in d["reports"]]


def strip_timing(text: str) -> str:
    """Report text with timing removed, for byte-level determinism checks."""
    d = json.loads(text)
    for r in d.get("reports", [d]):
        r.pop("timing", None)
    return json.dumps(d, indent=2, sort_keys=True)


def mean_delta(reports: list[AttackReport], key: str = "delta") -> Optional[float]:
    vals = [r.aggregates[key] for r in reports if key in r.aggregates]
    return sum(vals) / len(vals) if vals else None
