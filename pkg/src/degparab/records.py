"""Per-timestep diagnostics shared by the integrators and the harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


@dataclass
class RunRecord:
    step: int
    t: float
    newton_iterations: int
    gmres_min: int
    gmres_avg: float
    gmres_max: int
    l1_error: Optional[float] = None
    linf_error: Optional[float] = None
    front: Optional[float] = None
    mgm_cycles_avg: Optional[float] = None

    def __post_init__(self):
        if not self.gmres_min <= self.gmres_avg <= self.gmres_max:
            raise ValueError("RunRecord needs gmres_min <= gmres_avg <= gmres_max")

    @classmethod
    def from_newton(cls, step: int, t: float, report, **extra) -> "RunRecord":
        counts = report.gmres_counts() or [0]
        return cls(step=step, t=float(t), newton_iterations=report.iterations,
                   gmres_min=int(min(counts)), gmres_avg=float(np.mean(counts)),
                   gmres_max=int(max(counts)), **extra)

    def as_dict(self) -> dict:
        return asdict(self)
