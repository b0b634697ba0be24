"""Experiment specification files.

A spec is a plain ``key = value`` file with three sections::

    [experiment]
    scenario = student-large-dof
    eps = 0.5
    reference_size = 200000
    record = 0,100,200
    n_proj = 128
    projection_seed = 0
    output = runs/student-large-dof

    [target]
    family = isotropic-student        # or anisotropic-student
    d = 10
    beta = 11
    sigma = identity                  # or a row-major comma list of d*d numbers

    [sampler]
    algorithm = first-order           # first-order | zeroth-order | ula
    h = 0.00625
    iterations = 2000
    chains = 4096
    seed = 0
    init = point                      # point | gaussian
    init_point = origin               # or a comma list of d numbers
    init_scale = 1.0
    smoothing = none                  # zeroth-order only
    batch = none                      # zeroth-order only
    on_diverge = abort                # abort | drop-and-flag

Floats are written with ``repr`` so that :func:`dump_spec` followed by
:func:`parse_spec` reproduces an identical :class:`ExperimentSpec`.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..samplers import ALGORITHMS, FIRST_ORDER, SamplerConfig
from ..targets import ANISOTROPIC, ISOTROPIC, TargetDensity, anisotropic_student, isotropic_student
from ..theory import delta, first_order_step_bound


class ConfigError(ValueError):
    """Malformed spec file (unknown key, unparsable value, missing section)."""


@dataclass(frozen=True)
class TargetBlock:
    family: str = ISOTROPIC
    d: int = 2
    beta: float = 3.0
    sigma: Optional[tuple] = None  # row-major, None means identity

    def sigma_matrix(self) -> np.ndarray:
        if self.sigma is None:
            return np.eye(self.d)
        return np.array(self.sigma, dtype=float).reshape(self.d, self.d)

    def build(self) -> TargetDensity:
        if self.family == ISOTROPIC:
            return isotropic_student(self.d, self.beta)
        return anisotropic_student(self.sigma_matrix(), self.beta)


@dataclass(frozen=True)
class SamplerBlock:
    algorithm: str = FIRST_ORDER
    h: float = 0.01
    iterations: int = 100
    chains: int = 64
    seed: int = 0
    init: str = "point"
    init_point: Optional[tuple] = None
    init_scale: float = 1.0
    smoothing: Optional[float] = None
    batch: Optional[int] = None
    on_diverge: str = "abort"

    def config(self) -> SamplerConfig:
        return SamplerConfig(
            h=self.h, iterations=self.iterations, chains=self.chains, algorithm=self.algorithm,
            sigma=self.smoothing, m=self.batch, seed=self.seed, init=self.init,
            init_point=self.init_point, init_scale=self.init_scale,
        )


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    target: TargetBlock
    sampler: SamplerBlock
    eps: float = 0.5
    reference_size: int = 200_000
    record: tuple = (0,)
    n_proj: int = 128
    projection_seed: int = 0
    output: str = ""

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> "ExperimentSpec":
        spec = self
        if seed is not None:
            spec = replace(spec, sampler=replace(spec.sampler, seed=int(seed)))
        if output is not None:
            spec = replace(spec, output=str(output))
        return spec


_EXPERIMENT_KEYS = {"scenario", "eps", "reference_size", "record", "n_proj", "projection_seed", "output"}
_TARGET_KEYS = {"family", "d", "beta", "sigma"}
_SAMPLER_KEYS = {"algorithm", "h", "iterations", "chains", "seed", "init", "init_point", "init_scale",
                 "smoothing", "batch", "on_diverge"}


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _optional(text: str, cast):
    return None if text.strip().lower() in ("none", "") else cast(text)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def parse_spec_text(text: str) -> ExperimentSpec:
    """Parse spec text; extra sections (e.g. run metadata in a manifest) are ignored.

    Raises:
        ConfigError: missing sections, unknown keys or bad values.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section, allowed in (("experiment", _EXPERIMENT_KEYS), ("target", _TARGET_KEYS), ("sampler", _SAMPLER_KEYS)):
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        unknown = set(cp[section]) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    ex, tg, sm = cp["experiment"], cp["target"], cp["sampler"]
    try:
        family = tg.get("family", ISOTROPIC).strip()
        if family not in (ISOTROPIC, ANISOTROPIC):
            raise ValueError(f"family must be {ISOTROPIC} or {ANISOTROPIC}, got {family!r}")
        d = _int(tg["d"])
        sigma_text = tg.get("sigma", "identity").strip()
        sigma = None if sigma_text.lower() == "identity" else _floats(sigma_text)
        if sigma is not None and len(sigma) != d * d:
            raise ValueError(f"sigma needs {d * d} entries, got {len(sigma)}")
        target = TargetBlock(family, d, float(tg["beta"]), sigma)
        point_text = sm.get("init_point", "origin").strip()
        init_point = None if point_text.lower() == "origin" else _floats(point_text)
        algorithm = sm.get("algorithm", FIRST_ORDER).strip()
        if algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
        sampler = SamplerBlock(
            algorithm=algorithm,
            h=float(sm["h"]),
            iterations=_int(sm["iterations"]),
            chains=_int(sm["chains"]),
            seed=_int(sm.get("seed", "0")),
            init=sm.get("init", "point").strip(),
            init_point=init_point,
            init_scale=float(sm.get("init_scale", "1.0")),
            smoothing=_optional(sm.get("smoothing", "none"), float),
            batch=_optional(sm.get("batch", "none"), _int),
            on_diverge=sm.get("on_diverge", "abort").strip(),
        )
        record_text = ex.get("record", "").strip()
        record = tuple(_int(t) for t in record_text.split(",") if t.strip()) if record_text else (0, sampler.iterations)
        return ExperimentSpec(
            scenario=ex.get("scenario", "custom").strip(),
            target=target,
            sampler=sampler,
            eps=float(ex.get("eps", "0.5")),
            reference_size=_int(ex.get("reference_size", "200000")),
            record=record,
            n_proj=_int(ex.get("n_proj", "128")),
            projection_seed=_int(ex.get("projection_seed", "0")),
            output=ex.get("output", "").strip(),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid spec: {exc}") from exc


def parse_spec(path) -> ExperimentSpec:
    return parse_spec_text(Path(path).read_text())


def spec_sections(spec: ExperimentSpec) -> dict:
    """Ordered ``{section: {key: text}}`` mapping used by :func:`dump_spec`."""
    t, s = spec.target, spec.sampler
    return {
        "experiment": {
            "scenario": spec.scenario,
            "eps": _fmt(float(spec.eps)),
            "reference_size": str(spec.reference_size),
            "record": _fmt(tuple(spec.record)),
            "n_proj": str(spec.n_proj),
            "projection_seed": str(spec.projection_seed),
            "output": spec.output,
        },
        "target": {
            "family": t.family,
            "d": str(t.d),
            "beta": _fmt(float(t.beta)),
            "sigma": "identity" if t.sigma is None else _fmt(tuple(float(v) for v in t.sigma)),
        },
        "sampler": {
            "algorithm": s.algorithm,
            "h": _fmt(float(s.h)),
            "iterations": str(s.iterations),
            "chains": str(s.chains),
            "seed": str(s.seed),
            "init": s.init,
            "init_point": "origin" if s.init_point is None else _fmt(tuple(float(v) for v in s.init_point)),
            "init_scale": _fmt(float(s.init_scale)),
            "smoothing": _fmt(None if s.smoothing is None else float(s.smoothing)),
            "batch": _fmt(s.batch),
            "on_diverge": s.on_diverge,
        },
    }


def render_sections(sections: dict) -> str:
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def dump_spec(spec: ExperimentSpec) -> str:
    return render_sections(spec_sections(spec))


def _half_step(d: int, beta: float) -> float:
    return first_order_step_bound(2.0, 2.0, beta, delta(beta, d, 2.0)) / 2.0


def preset(name: str) -> ExperimentSpec:
    """Built-in scenarios.

    ``student-large-dof``: ``d = 10, beta = 11`` (``nu = d + 2``).
    ``student-small-dof``: ``d = 10, beta = 6.5`` (``nu = 3``).
    ``golden-small``: ``d = 2, beta = 3`` with 64 chains and 50 steps.
    All use half the first-order step-size bound.
    """
    if name in ("student-large-dof", "student-small-dof"):
        d, beta = (10, 11.0) if name == "student-large-dof" else (10, 6.5)
        return ExperimentSpec(
            scenario=name,
            target=TargetBlock(ISOTROPIC, d, beta),
            sampler=SamplerBlock(h=_half_step(d, beta), iterations=2000, chains=4096),
            eps=0.5,
            reference_size=200_000,
            record=tuple(range(0, 2001, 100)),
            n_proj=128,
        )
    if name == "golden-small":
        return ExperimentSpec(
            scenario=name,
            target=TargetBlock(ISOTROPIC, 2, 3.0),
            sampler=SamplerBlock(h=_half_step(2, 3.0), iterations=50, chains=64, seed=7),
            eps=0.5,
            reference_size=1024,
            record=(0, 10, 25, 50),
            n_proj=16,
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


PRESETS = ("student-large-dof", "student-small-dof", "golden-small")


def load_spec(source: str) -> ExperimentSpec:
    """A preset name or a path to a spec file."""
    if source in PRESETS:
        return preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no preset or file named {source!r}")
    return parse_spec(path)

