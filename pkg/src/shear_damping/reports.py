"""Result records shared by the verification routines.

Every report is immutable and serializes to a plain JSON object through
``to_dict`` so the harness can write it straight into a run artifact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any


def _finite_or_none(value: float | None) -> float | None:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class DecayReport:
    """Fit of a bound ``|f(xi)| <= C exp(-rate * r(xi)^exponent)``."""

    subject: str
    exponent: float
    rate: float
    constant: float
    window: tuple[float, float]
    window_rates: tuple[float, ...] = ()
    refined_rate: float | None = None
    compensated_rate: float | None = None
    max_residual: float = 0.0
    passed: bool = False
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "compensated_rate": _finite_or_none(self.compensated_rate),
            "constant": _finite_or_none(self.constant),
            "exponent": self.exponent,
            "max_residual": _finite_or_none(self.max_residual),
            "notes": list(self.notes),
            "pass": self.passed,
            "rate": _finite_or_none(self.rate),
            "refined_rate": _finite_or_none(self.refined_rate),
            "subject": self.subject,
            "window": [float(self.window[0]), float(self.window[1])],
            "window_rates": [_finite_or_none(value) for value in self.window_rates],
        }


@dataclass(frozen=True)
class BoundReport:
    """Measured ratios against a bound with a single fitted constant."""

    subject: str
    ratios: dict[str, float]
    constant: float
    cap: float
    passed: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "cap": self.cap,
            "constant": _finite_or_none(self.constant),
            "notes": list(self.notes),
            "pass": self.passed,
            "ratios": {key: _finite_or_none(value) for key, value in sorted(self.ratios.items())},
            "subject": self.subject,
        }


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    violations: int
    constant: float
    witness: dict[str, float] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "constant": _finite_or_none(self.constant),
            "name": self.name,
            "violations": self.violations,
            "witness": self.witness,
        }


@dataclass(frozen=True)
class PropertyReport:
    """Randomized inequality checks; ``seed`` reproduces every draw."""

    seed: int
    trials: int
    checks: tuple[PropertyCheck, ...]
    passed: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    def check(self, name: str) -> PropertyCheck:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "checks": [item.to_dict() for item in self.checks],
            "notes": list(self.notes),
            "pass": self.passed,
            "seed": self.seed,
            "trials": self.trials,
        }
