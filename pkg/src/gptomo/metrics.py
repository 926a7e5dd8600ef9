"""Reconstruction error metric and run-record aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CSV_HEADER = "method,case,n,n_theta,n_k,family,seed,e_norm,seconds"


def e_norm(f_r: np.ndarray, f_true: np.ndarray) -> float:
    """Relative reconstruction error ||f_r - f_true||_F / ||f_true||_F.

    Shapes must agree up to flattening; an identically zero ground truth
    has no relative error and is rejected.
    """
    a = np.asarray(getattr(f_r, "values", f_r), dtype=float).ravel()
    b = np.asarray(getattr(f_true, "values", f_true), dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(b))
    if denom == 0.0:
        raise ValueError("ground truth is identically zero; relative error undefined")
    return float(np.linalg.norm(a - b)) / denom


@dataclass(frozen=True)
class MetricRecord:
    """One reconstruction outcome, one CSV row.

    ``seconds`` is informational wall-clock time; leave it None for
    byte-reproducible output files.
    """

    method: str
    case: str
    n: int
    n_theta: int
    n_k: int
    family: str
    seed: int
    e_norm: float
    seconds: float | None = None

    def to_row(self) -> str:
        seconds = "" if self.seconds is None else f"{self.seconds:.3f}"
        return (f"{self.method},{self.case},{self.n},{self.n_theta},{self.n_k},"
                f"{self.family},{self.seed},{self.e_norm:.12g},{seconds}")


def summarize(records) -> str:
    """Deterministic CSV text for a collection of records.

    Rows are sorted by (method, case, n, n_theta, n_k, family, seed) so the
    same records always produce identical bytes.
    """
    ordered = sorted(records, key=lambda r: (r.method, r.case, r.n, r.n_theta,
                                             r.n_k, r.family, r.seed))
    lines = [CSV_HEADER]
    lines.extend(r.to_row() for r in ordered)
    return "\n".join(lines) + "\n"


def parse_metrics_csv(text: str) -> list[MetricRecord]:
    """Inverse of :func:`summarize`, tolerant of an empty seconds field."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized metrics CSV header")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise ValueError(f"malformed metrics row: {ln!r}")
        records.append(MetricRecord(
            method=parts[0], case=parts[1], n=int(parts[2]), n_theta=int(parts[3]),
            n_k=int(parts[4]), family=parts[5], seed=int(parts[6]),
            e_norm=float(parts[7]),
            seconds=None if parts[8] == "" else float(parts[8]),
        ))
    return records
