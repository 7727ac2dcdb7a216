"""Container for noisy, possibly non-synchronous observations and its CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


@dataclass(frozen=True)
class ObservationSet:
    """Per-component observation times and noisy values.

    ``times[p]`` and ``values[p]`` hold the ``n_p + 1`` observations
    ``t_0 < t_1 < ... < t_{n_p}`` of component ``p``.
    """

    times: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = tuple(np.asarray(t, dtype=float) for t in self.times)
        values = tuple(np.asarray(v, dtype=float) for v in self.values)
        if len(times) != len(values) or not times:
            raise ValueError("need matching, non-empty lists of times and values")
        for p, (t, v) in enumerate(zip(times, values)):
            if t.ndim != 1 or t.shape != v.shape:
                raise ValueError(f"component {p}: times and values must be 1d of equal length")
            if t.size < 2:
                raise ValueError(f"component {p}: at least 2 observations required")
            if np.any(np.diff(t) <= 0):
                raise ValueError(f"component {p}: times must be strictly increasing")
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(t))):
                raise ValueError(f"component {p}: non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def regular(cls, values, meta=None) -> "ObservationSet":
        """Observations ``Y_0..Y_n`` on the grid ``i/n`` (one column per component)."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n = values.shape[0] - 1
        t = np.arange(n + 1) / n
        return cls(tuple(t for _ in range(values.shape[1])),
                   tuple(values[:, p] for p in range(values.shape[1])),
                   dict(meta or {}))

    @property
    def d(self) -> int:
        return len(self.times)

    def n_obs(self, p: int = 0) -> int:
        """Number of increments ``n_p`` of component ``p``."""
        return self.times[p].size - 1

    def increments(self, p: int = 0) -> np.ndarray:
        return np.diff(self.values[p])

    def is_regular(self, p: int = 0) -> bool:
        t = self.times[p]
        n = t.size - 1
        return bool(np.allclose(t, np.arange(n + 1) / n, rtol=0.0, atol=1e-12))

    def is_synchronous(self) -> bool:
        t0 = self.times[0]
        return all(t.shape == t0.shape and np.array_equal(t, t0) for t in self.times[1:])

    def component(self, p: int) -> "ObservationSet":
        return ObservationSet((self.times[p],), (self.values[p],), dict(self.meta))

    def select(self, components: Sequence[int]) -> "ObservationSet":
        return ObservationSet(tuple(self.times[p] for p in components),
                              tuple(self.values[p] for p in components), dict(self.meta))

    # CSV: header ``component,time,value``, one row per observation.
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["component", "time", "value"])
            for p, (t, v) in enumerate(zip(self.times, self.values)):
                for ti, vi in zip(t, v):
                    writer.writerow([p, repr(float(ti)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path) -> "ObservationSet":
        rows: dict[int, list[tuple[float, float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["component", "time", "value"]:
                raise ValueError(f"{path}: expected header 'component,time,value'")
            for row in reader:
                rows.setdefault(int(row["component"]), []).append((float(row["time"]), float(row["value"])))
        if not rows:
            raise ValueError(f"{path}: no observations")
        comps = sorted(rows)
        if comps != list(range(len(comps))):
            raise ValueError(f"{path}: components must be numbered 0..d-1")
        times, values = [], []
        for p in comps:
            arr = np.array(sorted(rows[p]))
            times.append(arr[:, 0])
            values.append(arr[:, 1])
        return cls(tuple(times), tuple(values), {"source": str(Path(path))})
