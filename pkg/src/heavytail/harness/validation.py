"""Named precondition rules for experiment specs.

Every hypothesis key in :data:`heavytail.theory.ASSUMPTIONS` has a rule here.
Rules marked ``blocking`` stop a run; the others are only recorded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..samplers import FIRST_ORDER, ZEROTH_ORDER
from ..targets import TargetDensity
from ..theory import ASSUMPTIONS, delta, first_order_step_bound, zeroth_order_step_bound
from .config import ExperimentSpec


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str


class SpecValidationError(ValueError):
    """One or more blocking rules failed; ``violations`` lists all of them."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = [f"  - {v.rule}: {v.message}" for v in violations]
        super().__init__("experiment spec violates:\n" + "\n".join(lines))


@dataclass(frozen=True)
class Rule:
    name: str
    check: Callable[[ExperimentSpec, Optional[TargetDensity]], bool]
    blocking: Callable[[ExperimentSpec], bool]


def _delta(t: TargetDensity) -> Optional[float]:
    try:
        return delta(t.beta, t.d, t.cv)
    except ValueError:
        return None


def _first_step_ok(spec, t):
    dl = _delta(t)
    return dl is not None and spec.sampler.h < first_order_step_bound(t.alpha, t.lipschitz, t.beta, dl)


def _zeroth_step_ok(spec, t):
    dl = _delta(t)
    m = spec.sampler.batch or 1
    return dl is not None and spec.sampler.h < zeroth_order_step_bound(t.alpha, t.lipschitz, t.beta, dl, t.d, m)


def _algorithm(*names):
    return lambda spec: spec.sampler.algorithm in names


_ALWAYS = lambda spec: True  # noqa: E731
_NEVER = lambda spec: False  # noqa: E731

RULES: dict[str, Rule] = {
    "normalizable": Rule("normalizable", lambda s, t: t.normalizable, _ALWAYS),
    "finite-moments": Rule("finite-moments", lambda s, t: t.finite_mean_potential, _ALWAYS),
    "positive-delta": Rule("positive-delta", lambda s, t: _delta(t) is not None, _algorithm(FIRST_ORDER, ZEROTH_ORDER)),
    "first-order-step": Rule("first-order-step", _first_step_ok, _algorithm(FIRST_ORDER)),
    "zeroth-order-step": Rule("zeroth-order-step", _zeroth_step_ok, _algorithm(ZEROTH_ORDER)),
    "cv-below-beta-plus-one": Rule("cv-below-beta-plus-one", lambda s, t: 0 < t.cv < t.beta + 1, _NEVER),
    "beta-above-d": Rule("beta-above-d", lambda s, t: t.beta > t.d, _NEVER),
    "small-beta-gamma": Rule("small-beta-gamma", lambda s, t: t.beta / (t.d + 2) > 0, _NEVER),
    "student-small-beta": Rule("student-small-beta", lambda s, t: (t.d + 2) / 2 < t.beta <= t.d, _NEVER),
    "bridge-condition": Rule(
        "bridge-condition", lambda s, t: t.beta > t.lipschitz**2 * t.d / (2 * t.alpha**2) + 1, _NEVER),
    "alpha-below-L": Rule("alpha-below-L", lambda s, t: t.alpha <= t.lipschitz, _NEVER),
    "r-range": Rule("r-range", lambda s, t: t.beta - t.d / 2 - 1 > 0, _NEVER),
    "student-family": Rule("student-family", lambda s, t: t.family.is_student, _ALWAYS),
    "positive-accuracy": Rule("positive-accuracy", lambda s, t: s.eps > 0, _ALWAYS),
}

# structural rules that are not convergence hypotheses
_STRUCTURAL = {
    "zeroth-order-knobs": (
        lambda s: s.sampler.algorithm != ZEROTH_ORDER
        or (s.sampler.smoothing is not None and s.sampler.smoothing > 0 and (s.sampler.batch or 0) >= 1),
        "zeroth-order sampling needs smoothing > 0 and batch >= 1",
    ),
    "positive-step": (lambda s: s.sampler.h > 0, "step size h must be positive"),
    "chains": (lambda s: s.sampler.chains >= 1, "at least one chain is required"),
    "record-schedule": (
        lambda s: len(s.record) > 0 and list(s.record) == sorted(set(s.record))
        and s.record[0] >= 0 and s.record[-1] <= s.sampler.iterations,
        "record schedule must be sorted, unique and inside [0, iterations]",
    ),
    "reference-size": (
        lambda s: s.reference_size >= 2 * s.sampler.chains,
        "reference_size must be at least twice the chain count (ensemble comparison plus noise floor)",
    ),
    "projections": (lambda s: s.n_proj >= 1, "n_proj must be positive"),
    "on-diverge": (lambda s: s.sampler.on_diverge in ("abort", "drop-and-flag"), "on_diverge must be abort or drop-and-flag"),
    "init": (
        lambda s: s.sampler.init in ("point", "gaussian")
        and (s.sampler.init_point is None or len(s.sampler.init_point) == s.target.d),
        "init must be point or gaussian with a d-dimensional init_point",
    ),
}


def assess(spec: ExperimentSpec) -> dict[str, bool]:
    """Status of every named hypothesis for ``spec`` (``True`` = holds)."""
    target = spec.target.build()
    return {name: bool(rule.check(spec, target)) for name, rule in RULES.items()}


def validate(spec: ExperimentSpec) -> TargetDensity:
    """Check every blocking rule and return the built target.

    Raises:
        SpecValidationError: listing every violated rule, not just the first.
    """
    violations = [Violation(name, msg) for name, (ok, msg) in _STRUCTURAL.items() if not ok(spec)]
    try:
        target = spec.target.build()
    except ValueError as exc:
        violations.append(Violation("target", str(exc)))
        raise SpecValidationError(violations) from exc
    for name, rule in RULES.items():
        if rule.blocking(spec) and not rule.check(spec, target):
            violations.append(Violation(name, ASSUMPTIONS[name]))
    if violations:
        raise SpecValidationError(violations)
    return target


def covered_assumptions() -> set[str]:
    return set(RULES)
