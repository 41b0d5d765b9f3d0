"""Residual reports: the common currency of all verification suites."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ResidualReport:
    check_id: str
    points: int
    max_residual: float
    mean_residual: float
    tol: float
    verdict: str
    worst_point: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return {
            "id": self.check_id,
            "points": self.points,
            "max_residual": float(self.max_residual),
            "mean_residual": float(self.mean_residual),
            "tol": float(self.tol),
            "verdict": self.verdict,
            "worst_point": [float(v) for v in self.worst_point],
            "note": self.note,
        }


def make_report(check_id, residuals, points_x, tol, note=""):
    """Build a report from per-point residuals (leading axis = points)."""
    residuals = np.asarray(residuals, float)
    flat = residuals.reshape(residuals.shape[0], -1)
    per_point = np.max(np.abs(flat), axis=1)
    worst = int(np.argmax(per_point))
    verdict = "pass" if np.max(per_point) <= tol else "fail"
    return ResidualReport(
        check_id=check_id,
        points=len(per_point),
        max_residual=float(np.max(per_point)),
        mean_residual=float(np.mean(per_point)),
        tol=float(tol),
        verdict=verdict,
        worst_point=list(np.asarray(points_x)[worst]),
        note=note,
    )
