"""Measurement records: in-memory form and the plain-text file format.

File layout::

    # focktraj record v1
    scheme=homodyne
    phase=0
    efficiency=1
    outcomes=gaussian
    dt=0.001
    t_start=-4
    seed=7
    steps=16000
    0 0.031622776601683791
    1 -0.012...

Counting outcomes are 0/1 integers, homodyne lines carry one increment and
heterodyne lines two (phase 0 then pi/2).  Binary-outcome records store
+-sqrt(dt).  Floats are written with 17 significant digits so a replay
reads back bit-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RecordError

SCHEMES = ("counting", "homodyne", "heterodyne")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class TrajectoryRecord:
    scheme: str
    dt: float
    t_start: float
    outcomes: np.ndarray
    phase: float = 0.0
    efficiency: float = 1.0
    outcome_kind: str = "gaussian"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise RecordError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "counting":
            out = np.asarray(self.outcomes, dtype=np.int64)
            if out.size and not np.isin(out, (0, 1)).all():
                raise RecordError("counting outcomes must be 0 or 1")
        else:
            out = np.asarray(self.outcomes, dtype=float)
            want = 1 if self.scheme == "homodyne" else 2
            if want == 2 and out.ndim == 1 and out.size == 0:
                out = out.reshape(0, 2)
            if (want == 1 and out.ndim != 1) or (want == 2 and (out.ndim != 2 or out.shape[1] != 2)):
                raise RecordError(f"{self.scheme} record has wrong outcome shape {out.shape}")
        self.outcomes = out

    def __len__(self):
        return len(self.outcomes)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(len(self))

    @property
    def counts(self) -> int:
        return int(self.outcomes.sum()) if self.scheme == "counting" else 0

    def signs(self) -> np.ndarray:
        """Outcome signs for binary diffusive records."""
        return np.where(self.outcomes >= 0, 1, -1)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        head = [
            "# focktraj record v1",
            f"scheme={self.scheme}",
            f"phase={fmt(self.phase)}",
            f"efficiency={fmt(self.efficiency)}",
            f"outcomes={self.outcome_kind}",
            f"dt={fmt(self.dt)}",
            f"t_start={fmt(self.t_start)}",
            f"seed={'' if self.seed is None else int(self.seed)}",
            f"steps={len(self)}",
        ]
        lines = []
        if self.scheme == "counting":
            lines = [f"{k} {int(v)}" for k, v in enumerate(self.outcomes)]
        elif self.scheme == "homodyne":
            lines = [f"{k} {fmt(v)}" for k, v in enumerate(self.outcomes)]
        else:
            lines = [f"{k} {fmt(a)} {fmt(b)}" for k, (a, b) in enumerate(self.outcomes)]
        return "\n".join(head + lines) + "\n"

    @classmethod
    def load(cls, path) -> "TrajectoryRecord":
        with open(path) as fh:
            return cls.loads(fh.read())

    @classmethod
    def loads(cls, text: str) -> "TrajectoryRecord":
        meta = {}
        rows = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, val = line.partition("=")
                meta[key.strip()] = val.strip()
                continue
            rows.append(line.split())
        try:
            scheme = meta["scheme"]
            steps = int(meta.get("steps", len(rows)))
            for k, row in enumerate(rows):
                if int(row[0]) != k:
                    raise RecordError(f"record line {k} has step index {row[0]}")
            if len(rows) != steps:
                raise RecordError(f"record declares {steps} steps but has {len(rows)}")
            if scheme == "counting":
                out = np.array([int(r[1]) for r in rows], dtype=np.int64)
            elif scheme == "homodyne":
                out = np.array([float(r[1]) for r in rows])
            else:
                out = np.array([[float(r[1]), float(r[2])] for r in rows]).reshape(-1, 2)
            seed = meta.get("seed", "")
            return cls(scheme=scheme, dt=float(meta["dt"]), t_start=float(meta["t_start"]),
                       outcomes=out, phase=float(meta.get("phase", 0)),
                       efficiency=float(meta.get("efficiency", 1)),
                       outcome_kind=meta.get("outcomes", "gaussian"),
                       seed=int(seed) if seed else None)
        except (KeyError, IndexError, ValueError) as exc:
            raise RecordError(f"malformed record: {exc}") from exc
