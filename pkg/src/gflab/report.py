"""Machine-readable experiment reports."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

from . import __version__
from . import io as gio

SCHEMA_VERSION = "1.0"

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
SKIPPED = "skipped"
STATUSES = (PASS, FAIL, INCONCLUSIVE, SKIPPED)


@dataclass
class RunReport:
    """Summary of one experiment.

    ``checks`` maps a name to ``{"status", "value", "tolerance", "note"}``.
    Wall-clock information lives in :meth:`metadata`, never in the payload,
    so identical inputs give byte-identical ``report.json`` files.
    """

    experiment: str
    parameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    runtime: float = field(default=0.0, compare=False)
    #: time series behind the metrics, written to CSV and figures rather than the JSON
    series: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.provenance.setdefault("code_version", __version__)

    def check(self, name: str, ok, value, tolerance, note: str = "") -> bool:
        """Record a check; ``ok`` may be a bool or one of the status strings."""
        status = ok if isinstance(ok, str) else (PASS if ok else FAIL)
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        self.checks[name] = {"status": status, "value": value, "tolerance": tolerance, "note": note}
        return status == PASS

    def skip(self, name: str, reason: str, tolerance=None):
        self.checks[name] = {"status": SKIPPED, "value": None, "tolerance": tolerance, "note": reason}

    @property
    def status(self) -> str:
        st = [c["status"] for c in self.checks.values()]
        if FAIL in st:
            return FAIL
        if INCONCLUSIVE in st:
            return INCONCLUSIVE
        return PASS

    @property
    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if c["status"] == FAIL]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "status": self.status,
            "parameters": self.parameters,
            "metrics": self.metrics,
            "checks": self.checks,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return gio.dumps(self.to_dict())

    def write(self, path):
        return gio.write_json(path, self.to_dict())

    def metadata(self) -> dict:
        import numpy

        return {
            "experiment": self.experiment,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "runtime_seconds": self.runtime,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "code_version": __version__,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("unsupported report schema version")
        return cls(doc["experiment"], doc["parameters"], doc["metrics"], doc["checks"], doc["provenance"])

    def summary(self) -> str:
        n_pass = sum(c["status"] == PASS for c in self.checks.values())
        return f"{self.experiment}: {self.status} ({n_pass}/{len(self.checks)} checks passed)"
