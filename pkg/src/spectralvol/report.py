"""Estimate reports and their JSON/CSV export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import ndtri


class InvalidReportError(ValueError):
    """Raised when a report cannot support inference (e.g. non-positive variance)."""


def normal_quantile(level: float) -> float:
    """Two-sided standard normal critical value ``z_{(1+level)/2}``."""
    if not 0.0 <= level < 1.0:
        raise ValueError(f"level must lie in [0, 1), got {level}")
    return float(ndtri(0.5 * (1.0 + level)))


@dataclass
class EstimateReport:
    """Cumulative estimate path evaluated at the bin edges ``k h``.

    Scalar estimators carry ``estimate`` of shape ``(K+1,)`` and ``variance``
    of shape ``(K+1,)``.  The vectorized covolatility estimator carries
    ``(K+1, d^2)`` estimates and ``(K+1, d^2, d^2)`` covariances.
    """

    times: np.ndarray
    estimate: np.ndarray
    variance: np.ndarray
    mode: str
    estimator: str
    eta2: Any = None
    local: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def is_vector(self) -> bool:
        return self.estimate.ndim == 2

    @property
    def final(self):
        return self.estimate[-1]

    @property
    def final_variance(self):
        return self.variance[-1]

    def index_at(self, t: float) -> int:
        """Edge index ``floor(t / h)``, clipped to the covered horizon."""
        h = self.times[1] - self.times[0]
        return int(min(np.floor(t / h + 1e-9), self.times.size - 1))

    def at(self, t: float):
        return self.estimate[self.index_at(t)]

    def variance_at(self, t: float):
        return self.variance[self.index_at(t)]

    def standard_errors(self) -> np.ndarray:
        """Marginal standard errors along the path (diagonal for vector reports)."""
        v = self.variance if not self.is_vector else np.diagonal(self.variance, axis1=1, axis2=2)
        return np.sqrt(np.clip(v, 0.0, None))

    def confidence_band(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        z = normal_quantile(level)
        se = self.standard_errors()
        return self.estimate - z * se, self.estimate + z * se

    def to_dict(self) -> dict:
        lo, hi = self.confidence_band(self.meta.get("level", 0.95))
        out = {
            "estimator": self.estimator,
            "mode": self.mode,
            "times": self.times.tolist(),
            "estimate": _rowmajor(self.estimate),
            "variance": _rowmajor(self.variance),
            "ci_level": self.meta.get("level", 0.95),
            "ci_lo": _rowmajor(lo),
            "ci_hi": _rowmajor(hi),
            "eta2": np.asarray(self.eta2).tolist() if self.eta2 is not None else None,
            "meta": _plain(self.meta),
        }
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path, level: float | None = None) -> None:
        """Columns ``t, estimate, variance, ci_lo, ci_hi`` (plus ``entry`` for vector reports).

        ``path`` may also be an open text stream.
        """
        level = self.meta.get("level", 0.95) if level is None else level
        lo, hi = self.confidence_band(level)
        if hasattr(path, "write"):
            self._write_csv(path, lo, hi)
        else:
            with open(path, "w", newline="") as fh:
                self._write_csv(fh, lo, hi)

    def _write_csv(self, fh, lo, hi) -> None:
        w = csv.writer(fh)
        if not self.is_vector:
            w.writerow(["t", "estimate", "variance", "ci_lo", "ci_hi"])
            for row in zip(self.times, self.estimate, self.variance, lo, hi):
                w.writerow([repr(float(x)) for x in row])
        else:
            var = np.diagonal(self.variance, axis1=1, axis2=2)
            w.writerow(["t", "entry", "estimate", "variance", "ci_lo", "ci_hi"])
            for i, t in enumerate(self.times):
                for e in range(self.estimate.shape[1]):
                    w.writerow([repr(float(t)), e, repr(float(self.estimate[i, e])),
                                repr(float(var[i, e])), repr(float(lo[i, e])), repr(float(hi[i, e]))])


def _rowmajor(a: np.ndarray):
    a = np.asarray(a)
    if a.ndim <= 1:
        return a.tolist()
    return {"dims": list(a.shape), "data": a.reshape(-1).tolist()}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
