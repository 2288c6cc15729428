"""Sensitivity analysis over the bias bound ``delta0``.

For a conjectured bias ``delta0`` the null of no effect is rejected when
``t = (psi_n - delta0) / se`` exceeds the upper normal quantile. The largest
``delta0`` still rejected is ``psi_n - z * se`` (floored at 0), which is the
rejection frontier reported alongside the grid evaluation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

from scipy.special import ndtr, ndtri

SIDEDNESS = ("one_sided_upper", "two_sided")


class DegenerateInferenceError(ValueError):
    """Standard error is zero, so the test statistic is undefined."""


@dataclass(frozen=True)
class SensitivitySpec:
    alpha: float = 0.05
    sidedness: str = "two_sided"
    delta_grid: tuple[float, ...] = ()
    prespecified_max_delta: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"sidedness must be one of {SIDEDNESS}")
        grid = tuple(float(d) for d in self.delta_grid)
        if any(not 0.0 <= d <= 1.0 for d in grid):
            raise ValueError("delta_grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("delta_grid must be strictly increasing")
        object.__setattr__(self, "delta_grid", grid)

    @property
    def z(self) -> float:
        level = self.alpha / 2.0 if self.sidedness == "two_sided" else self.alpha
        return float(ndtri(1.0 - level))

    @classmethod
    def from_dict(cls, d: dict) -> "SensitivitySpec":
        return cls(
            alpha=d.get("alpha", 0.05),
            sidedness=d.get("sidedness", "two_sided"),
            delta_grid=tuple(d.get("delta_grid", ())),
            prespecified_max_delta=d.get("prespecified_max_delta"),
        )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "sidedness": self.sidedness,
            "delta_grid": list(self.delta_grid),
            "prespecified_max_delta": self.prespecified_max_delta,
            "critical_value": self.z,
        }


@dataclass(frozen=True)
class SensitivityPoint:
    delta0: float
    t_stat: float
    p_value: float
    reject: bool


def sens_test(psi_n: float, se: float, delta0: float, spec: SensitivitySpec) -> SensitivityPoint:
    """Test ``psi - delta0 <= 0``; the p-value is the upper tail ``1 - Phi(t)``."""
    if not se > 0:
        raise DegenerateInferenceError("standard error must be positive")
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    t = (psi_n - delta0) / se
    return SensitivityPoint(float(delta0), t, float(ndtr(-t)), bool(t > spec.z))


def max_rejectable_delta(psi_n: float, se: float, spec: SensitivitySpec) -> float:
    if not se > 0:
        raise DegenerateInferenceError("standard error must be positive")
    return max(0.0, psi_n - spec.z * se)


@dataclass(frozen=True)
class SensitivityCurve:
    points: tuple[SensitivityPoint, ...]
    max_rejectable_delta: float
    conclusion: str
    spec: SensitivitySpec = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "points": [vars(p).copy() for p in self.points],
            "max_rejectable_delta": self.max_rejectable_delta,
            "verdict": {
                "conclusion": self.conclusion,
                "prespecified_max_delta": self.spec.prespecified_max_delta,
                "max_rejectable_delta": self.max_rejectable_delta,
                "alpha": self.spec.alpha,
                "sidedness": self.spec.sidedness,
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta0", "t_stat", "p_value", "reject"])
        for p in self.points:
            writer.writerow([repr(p.delta0), repr(p.t_stat), repr(p.p_value), int(p.reject)])
        return buf.getvalue()


def verdict(frontier: float, spec: SensitivitySpec) -> str:
    ceiling = spec.prespecified_max_delta
    if ceiling is None:
        return "no prespecified ceiling"
    # rejection is strict at the frontier itself
    return "robust" if ceiling < frontier else "not robust"


def curve_for(psi_n: float, se: float, spec: SensitivitySpec) -> SensitivityCurve:
    points = tuple(sens_test(psi_n, se, d, spec) for d in spec.delta_grid)
    frontier = max_rejectable_delta(psi_n, se, spec)
    return SensitivityCurve(points, frontier, verdict(frontier, spec), spec)


def sensitivity_curve(tmle, spec: SensitivitySpec) -> SensitivityCurve:
    """Evaluate the grid and frontier for a :class:`~npsens.tmle.TmleResult`."""
    return curve_for(tmle.psi_n, tmle.se, spec)


@dataclass(frozen=True)
class GapBound:
    centered: float  # conjectured E[Y(0)|A=1] - phi_n, floored at 0
    crude: float  # the conjectured rate itself


def causal_gap_bound(phi_n: float, conjectured_spontaneous_rate: float) -> GapBound:
    """Translate a conjectured spontaneous outcome rate under no treatment into ``delta0``.

    ``centered`` subtracts the estimated control-arm mean among the treated;
    ``crude`` bounds the gap by the rate alone, which needs no estimate.
    """
    r = conjectured_spontaneous_rate
    if not 0.0 <= r <= 1.0:
        raise ValueError("conjectured rate must lie in [0, 1]")
    return GapBound(centered=max(0.0, r - phi_n), crude=r)


def grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Evenly spaced grid including ``stop``, rounded to 12 decimals."""
    k = int(round((stop - start) / step))
    return tuple(round(start + i * step, 12) for i in range(k + 1))

