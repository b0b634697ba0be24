"""Iteration-complexity tables over a grid of dimensions.

Grid files use one ``[complexity]`` section::

    [complexity]
    dims = 5,10,20,40
    beta_rule = d+1          # d+1 | (d+3)/2 | fixed:<beta>
    eps = 0.5
    w2_init = auto           # auto (distance bound from the origin) or a number
    batches = 1,d            # zeroth-order batch sizes; "d" means m = d

Each row is one ``(d, algorithm, batch rule)``.  ``*_ratio`` columns divide by
the row with the smallest ``d`` for the same algorithm and batch rule; ``K_ratio`` uses
``K / log(2 W0/eps)`` so that the logarithmic factor cancels.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..samplers import FIRST_ORDER, ZEROTH_ORDER
from ..targets import isotropic_student
from ..theory import (
    InapplicableError,
    analytic_moments_student,
    default_w2_init,
    delta,
    iteration_complexity,
    iteration_complexity_upper,
    log_accuracy_factor,
    sigma_for_accuracy,
    step_size_for_accuracy,
    zeroth_order_complexity_order,
    zeroth_order_iteration_complexity,
    zeroth_order_step_for_accuracy,
)
from .config import ConfigError

COLUMNS = (
    "d", "beta", "algorithm", "batch_rule", "m", "delta", "h_star", "sigma", "K", "log_factor", "K_per_log",
    "evaluations", "K_order", "evaluations_order", "K_ratio", "evaluations_ratio",
    "K_order_ratio", "evaluations_order_ratio", "valid", "reason",
)


@dataclass(frozen=True)
class ComplexityGrid:
    dims: tuple
    beta_rule: str
    eps: float
    w2_init: Optional[float] = None
    batches: tuple = ("1", "d")

    def beta(self, d: int) -> float:
        rule = self.beta_rule.replace(" ", "")
        if rule == "d+1":
            return d + 1.0
        if rule == "(d+3)/2":
            return (d + 3.0) / 2.0
        if rule.startswith("fixed:"):
            return float(rule.split(":", 1)[1])
        raise ConfigError(f"unknown beta_rule {self.beta_rule!r}")


def grid_preset(name: str) -> ComplexityGrid:
    if name == "large-dof":
        return ComplexityGrid((5, 10, 20, 40), "d+1", 0.5)
    if name == "small-dof":
        return ComplexityGrid((5, 10, 20, 40), "(d+3)/2", 0.5)
    raise ConfigError(f"unknown complexity preset {name!r}; choose large-dof or small-dof")


def parse_grid_text(text: str) -> ComplexityGrid:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
        sec = cp["complexity"]
        dims = tuple(int(t) for t in sec["dims"].split(","))
        w2 = sec.get("w2_init", "auto").strip()
        grid = ComplexityGrid(
            dims=dims,
            beta_rule=sec.get("beta_rule", "d+1").strip(),
            eps=float(sec.get("eps", "0.5")),
            w2_init=None if w2 == "auto" else float(w2),
            batches=tuple(t.strip() for t in sec.get("batches", "1,d").split(",") if t.strip()),
        )
    except (configparser.Error, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid complexity grid: {exc}") from exc
    if not grid.dims or min(grid.dims) < 1 or not grid.eps > 0:
        raise ConfigError("dims must be positive integers and eps > 0")
    for d in grid.dims:
        grid.beta(d)
    return grid


def load_grid(source: str) -> ComplexityGrid:
    if source in ("large-dof", "small-dof"):
        return grid_preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no complexity preset or file named {source!r}")
    return parse_grid_text(path.read_text())


def _batch(token: str, d: int) -> float:
    if token == "d":
        return float(d)
    if token in ("inf", "infinity"):
        return math.inf
    return float(int(token))


def complexity_rows(grid: ComplexityGrid) -> list[dict]:
    """Rows for every ``(d, algorithm, m)``; inapplicable rows are kept with ``valid = 0``."""
    rows = []
    for d in sorted(grid.dims):
        beta = grid.beta(d)
        variants = [(FIRST_ORDER, None)] + [(ZEROTH_ORDER, tok) for tok in grid.batches]
        for algorithm, token in variants:
            row = {c: "" for c in COLUMNS}
            row.update(d=d, beta=beta, algorithm=algorithm, batch_rule="" if token is None else token, valid=0)
            try:
                row.update(_evaluate(grid, d, beta, algorithm, token))
                row["valid"] = 1
            except InapplicableError as exc:
                row["reason"] = str(exc)
            rows.append(row)
    _add_ratios(rows)
    return rows


def _evaluate(grid: ComplexityGrid, d: int, beta: float, algorithm: str, token: Optional[str]) -> dict:
    eps = grid.eps
    dl = delta(beta, d, 2.0)
    mom = analytic_moments_student(d, beta)
    w0 = grid.w2_init if grid.w2_init is not None else default_w2_init(isotropic_student(d, beta))
    log_term = log_accuracy_factor(w0, eps)
    out = {"delta": dl, "log_factor": log_term}
    if algorithm == FIRST_ORDER:
        k = iteration_complexity(eps, w0, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2)
        out.update(
            h_star=step_size_for_accuracy(eps, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2),
            K=k,
            evaluations=k,
            K_order=iteration_complexity_upper(eps, w0, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2),
        )
        out["evaluations_order"] = out["K_order"]
    else:
        m = _batch(token, d)
        sig = sigma_for_accuracy(eps, dl, d, 2.0, 2.0)
        k = zeroth_order_iteration_complexity(eps, w0, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2, m, sig)
        order = zeroth_order_complexity_order(eps, w0, d, dl, mom.ev, mom.egrad2, m)
        out.update(
            m=int(m) if math.isfinite(m) else "inf",
            sigma=sig,
            h_star=zeroth_order_step_for_accuracy(eps, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2, m, sig),
            K=k,
            evaluations=k * (m + 1),
            K_order=order,
            evaluations_order=m * order,
        )
    out["K_per_log"] = out["K"] / log_term if log_term > 0 else math.nan
    return out


def _add_ratios(rows: list[dict]) -> None:
    base: dict = {}
    for row in rows:
        if not row["valid"]:
            continue
        key = (row["algorithm"], row["batch_rule"])
        ref = base.setdefault(key, row)
        row["K_ratio"] = row["K_per_log"] / ref["K_per_log"]
        row["evaluations_ratio"] = row["evaluations"] / ref["evaluations"]
        row["K_order_ratio"] = row["K_order"] / ref["K_order"]
        row["evaluations_order_ratio"] = row["evaluations_order"] / ref["evaluations_order"]

