"""Acceptance checks run by ``heavytail verify`` and by the test-suite.

Each check returns a :class:`CheckResult` with a pass flag, the measured
numbers and its runtime.  Seeds are fixed, so every check is reproducible.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..metrics import (
    ks_critical_value,
    radial_beta_ks,
    random_directions,
    robust_moment,
    sliced_w2,
)
from ..samplers import FIRST_ORDER, ULA, SamplerConfig, em_step, run_ensemble, zo_gradient
from ..targets import eval_grad, isotropic_student, reference_sample
from ..theory import (
    analytic_moments_student,
    asymptotic_bias,
    chi2_rate_small_beta,
    chi2_rate_strongly_convex,
    contraction_params,
    delta,
    first_order_step_bound,
    gamma_ratio_and_bound,
    moment_difference_bound,
    step_size_for_accuracy,
    student_cv_gamma,
    wpi_constant_small_beta,
    wpi_constant_strongly_convex,
    wpi_constant_student_small_beta,
)
from .complexity import ComplexityGrid, complexity_rows
from .config import ExperimentSpec, SamplerBlock, TargetBlock
from .runner import run_experiment

SEED = 20240611
RATIO_RTOL = 1e-12


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    runtime_limit: Optional[float] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:>2}: {self.name} ({self.seconds:.1f}s)"


def _rng(tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=SEED, spawn_key=(tag,))))


def _timed(number: int, name: str, limit: Optional[float], body: Callable[[], tuple]) -> CheckResult:
    start = time.perf_counter()
    passed, details = body()
    seconds = time.perf_counter() - start
    within = limit is None or seconds < limit
    details["runtime_within_limit"] = within
    return CheckResult(number, name, bool(passed and within), details, seconds, limit)


# 1 ---------------------------------------------------------------------------

def check_analytic_moments(n: int = 200_000) -> CheckResult:
    def body():
        details, ok = {}, True
        t = isotropic_student(10, 11.0)
        x = reference_sample(t, n, _rng(1)).states
        exact = analytic_moments_student(10, 11.0)
        for name, f, target_value in (("ev", "V", exact.ev), ("egrad2", "grad2", exact.egrad2)):
            est = robust_moment(x, f, 1, t)
            z = abs(est.value - target_value) / est.se
            details[f"large_dof_{name}"] = {"estimate": est.value, "se": est.se, "exact": target_value, "z": z}
            ok &= z <= 3.0
        t = isotropic_student(10, 6.5)
        x = reference_sample(t, n, _rng(2)).states
        exact = analytic_moments_student(10, 6.5)
        for name, f, target_value in (("ev", "V", exact.ev), ("egrad2", "grad2", exact.egrad2)):
            est = robust_moment(x, f, 200, t)
            rel = abs(est.value - target_value) / target_value
            details[f"small_dof_{name}"] = {"estimate": est.value, "exact": target_value, "relative_error": rel}
            ok &= rel <= 0.10
        return ok, details

    return _timed(1, "analytic stationary moments match the exact sampler", 30.0, body)


# 2 ---------------------------------------------------------------------------

def check_delta_values() -> CheckResult:
    def body():
        details, ok = {}, True
        for d in (5, 10, 20, 40):
            large = delta(d + 1.0, d, 2.0)
            small = delta((d + 3.0) / 2.0, d, 2.0)
            details[str(d)] = {"beta=d+1": large, "beta=(d+3)/2": small}
            ok &= large == 1.0 and small == 1.0 / d
        return ok, details

    return _timed(2, "contraction margin equals 1 and 1/d exactly", None, body)


# 3 and 4 --------------------------------------------------------------------

def _zo_sweep_points() -> np.ndarray:
    return _rng(3).standard_normal((20, 5))


def _zo_samples(target, x, sigma, m, reps, rng) -> np.ndarray:
    xs = np.broadcast_to(x, (reps, x.size))
    return zo_gradient(target, xs, sigma, m, rng).value


def check_zo_bias(reps: int = 100_000) -> CheckResult:
    def body():
        t = isotropic_student(5, 4.0)
        lip, d = t.lipschitz, t.d
        rng = _rng(4)
        rows, ok = [], True
        for sigma in (0.01, 0.1):
            bound = lip**2 * sigma**2 * d
            for x in _zo_sweep_points():
                g = _zo_samples(t, x, sigma, 1, reps, rng)
                mean = g.mean(axis=0)
                err = mean - eval_grad(t, x)
                trace_cov = float(np.sum(g.var(axis=0, ddof=1)))
                # debiased estimate of |E g - grad V|^2 and the SE of |mean - grad V|
                bias2 = float(err @ err) - trace_cov / reps
                se_norm = math.sqrt(trace_cov / reps)
                within_bound = bias2 <= bound
                near_zero = math.sqrt(float(err @ err)) <= 3.0 * se_norm
                ok &= within_bound and near_zero
                rows.append({"sigma": sigma, "bias2": bias2, "bound": bound,
                             "bias_norm": math.sqrt(float(err @ err)), "se": se_norm})
        worst = max(rows, key=lambda r: r["bias_norm"] / r["se"])
        return ok, {"cases": len(rows), "worst_bias_over_se": worst["bias_norm"] / worst["se"],
                    "max_bias2_over_bound": max(r["bias2"] / r["bound"] for r in rows)}

    return _timed(3, "zeroth-order estimator bias bound and unbiasedness", 60.0, body)


def zo_variance_bound(sigma: float, lipschitz: float, d: int, m: float, grad_norm2: float) -> float:
    return sigma**2 * lipschitz**2 * (d + 3) ** 3 / (2 * m) + 2 * (d + 5) * grad_norm2 / m


def check_zo_variance(reps: int = 100_000) -> CheckResult:
    def body():
        t = isotropic_student(5, 4.0)
        lip, d = t.lipschitz, t.d
        rng = _rng(5)
        violations, worst, cases = 0, 0.0, 0
        for sigma in (0.01, 0.1):
            for m in (1, 4, 16):
                for x in _zo_sweep_points():
                    g = _zo_samples(t, x, sigma, m, reps, rng)
                    centered = g - g.mean(axis=0)
                    sq = np.sum(centered * centered, axis=1)
                    var, se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(reps))
                    grad = eval_grad(t, x)
                    bound = zo_variance_bound(sigma, lip, d, m, float(grad @ grad))
                    violations += var - 3.0 * se > bound
                    worst = max(worst, var / bound)
                    cases += 1
        return violations == 0, {"cases": cases, "violations": violations, "max_variance_over_bound": worst}

    return _timed(4, "zeroth-order estimator variance bound", None, body)


# 5 ---------------------------------------------------------------------------

def check_moment_difference(n: int = 10_000, substeps: int = 32) -> CheckResult:
    """Trajectories of the diffusion itself, resolved with ``substeps`` EM steps per ``h``."""

    def body():
        d, beta = 10, 11.0
        t = isotropic_student(d, beta)
        dl = delta(beta, d, t.cv)
        h = first_order_step_bound(t.alpha, t.lipschitz, beta, dl) / 2
        mom = analytic_moments_student(d, beta)
        x0 = reference_sample(t, n, _rng(6)).states
        x = x0.copy()
        gen = _rng(7)
        fine = h / substeps
        out, ok = {}, True
        done = 0
        for mult in (1, 2, 4):
            while done < mult * substeps:
                x = em_step(t, x, fine, gen.standard_normal(x.shape))
                done += 1
            sq = np.sum((x - x0) ** 2, axis=1)
            mean, se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n))
            bound = moment_difference_bound(mult * h, beta, t.lipschitz, d, mom.ev, mom.egrad2)
            out[f"t={mult}h"] = {"mean": mean, "se": se, "bound": bound}
            ok &= mean - 2.0 * se <= bound
        return ok, out

    return _timed(5, "short-time moment difference bound", 120.0, body)


# 6 ---------------------------------------------------------------------------

def check_bias_floor(chains: int = 4096, reference_size: int = 200_000, snapshots: int = 9,
                     subsets_per_snapshot: int = 12) -> CheckResult:
    """Plateau sliced-W2 minus the independent-sample floor at h0, h0/4, h0/16.

    Each run goes ``K`` steps with ``(1-A)^K < 0.01`` and then records
    ``snapshots`` states over a further ``K`` steps.  Every snapshot is compared
    with several disjoint reference subsets under one fixed set of projections.
    The floor is the mean distance between disjoint pairs of reference subsets.
    Excess is ``sqrt(max(plateau^2 - floor^2, 0))``.
    """

    def body():
        d, beta = 10, 11.0
        t = isotropic_student(d, beta)
        dl = delta(beta, d, t.cv)
        h0 = first_order_step_bound(t.alpha, t.lipschitz, beta, dl) / 2
        mom = analytic_moments_student(d, beta)
        ref = reference_sample(t, reference_size, _rng(8)).states
        subsets = [ref[i * chains:(i + 1) * chains] for i in range(reference_size // chains)]
        dirs = random_directions(d, 128, _rng(9))

        def sw(a, b):
            return sliced_w2(a, b, directions=dirs, rng=0).value

        pairs = [sw(subsets[i], subsets[i + 1]) for i in range(0, len(subsets) - 1, 2)]
        floor = float(np.mean(pairs))
        excess, details = [], {"noise_floor": floor, "noise_floor_sd": float(np.std(pairs))}
        for j, h in enumerate((h0, h0 / 4, h0 / 16)):
            a = contraction_params(h, t.alpha, t.lipschitz, beta, dl, d, mom.ev, mom.egrad2).A
            k_burn = math.ceil(math.log(0.01) / math.log(1.0 - a))
            schedule = sorted({k_burn + (i * k_burn) // (snapshots - 1) for i in range(snapshots)})
            cfg = SamplerConfig(h=h, iterations=schedule[-1], chains=chains, seed=SEED + j)
            ens = run_ensemble(t, cfg, schedule)
            vals = [sw(e.states, subsets[(i * subsets_per_snapshot + s) % len(subsets)])
                    for i, e in enumerate(ens) for s in range(subsets_per_snapshot)]
            plateau = float(np.mean(vals))
            ex = math.sqrt(max(plateau**2 - floor**2, 0.0))
            excess.append(ex)
            details[f"h={h!r}"] = {"K": k_burn, "plateau": plateau,
                                   "plateau_se": float(np.std(vals) / math.sqrt(len(vals))), "excess": ex}
        monotone = excess[0] >= excess[1] >= excess[2]
        ratios = []
        ok = monotone
        for big, small in zip(excess, excess[1:]):
            if small > 0:
                ratios.append(big / small)
                ok &= big / small >= 1.5
            elif big > 0:
                ratios.append(math.inf)
            else:
                ratios.append(math.nan)  # both unresolved below the floor
                ok = False
        details["ratios"] = ratios
        details["monotone"] = monotone
        return ok, details

    return _timed(6, "bias floor shrinks with the step size", 600.0, body)


# 7 ---------------------------------------------------------------------------

def check_complexity_orders() -> CheckResult:
    def body():
        dims = (5, 10, 20, 40)
        large = complexity_rows(ComplexityGrid(dims, "d+1", 0.5, batches=("1", "d", "inf")))
        small = complexity_rows(ComplexityGrid(dims, "(d+3)/2", 0.5, batches=("1", "d", "inf")))

        def pick(rows, algorithm, rule=""):
            return {r["d"]: r for r in rows if r["algorithm"] == algorithm and r["batch_rule"] == rule}

        first_large = pick(large, FIRST_ORDER)
        k_values = [first_large[d]["K"] for d in dims]
        constant = len(set(k_values)) == 1
        first_small = pick(small, FIRST_ORDER)
        ratio = first_small[20]["K_per_log"] / first_small[10]["K_per_log"]
        in_window = 8.0 <= ratio <= 32.0

        # large degrees of freedom: m = 1 and m = d spend the same order of evaluations
        z1, zd = pick(large, "zeroth-order", "1"), pick(large, "zeroth-order", "d")
        tradeoff = [z1[d]["evaluations_order"] / zd[d]["evaluations_order"] for d in dims]
        k_md = [zd[d]["K_order"] for d in dims]
        tradeoff_ok = all(0.5 <= x <= 2.0 for x in tradeoff) and max(k_md) / min(k_md) <= 1.0 + 1e-12
        # small degrees of freedom: K barely depends on m, so m = 1 is cheapest
        s1, sd, sinf = (pick(small, "zeroth-order", r) for r in ("1", "d", "inf"))
        m_effect = [s1[d]["K_order"] / sinf[d]["K_order"] for d in dims]
        cheapest = all(s1[d]["evaluations"] <= sd[d]["evaluations"] for d in dims)
        batch_ok = all(1.0 <= x <= 4.0 for x in m_effect) and cheapest
        consistency = step_size_consistency()
        details = {
            "max_bias_over_half_eps": consistency,
            "first_order_K_large_dof": k_values,
            "first_order_K_ratio_20_over_10_small_dof": ratio,
            "m1_over_md_evaluations_large_dof": tradeoff,
            "K_order_m_eq_d_large_dof": k_md,
            "K_order_m1_over_m_inf_small_dof": m_effect,
            "m1_cheapest_small_dof": cheapest,
        }
        return constant and in_window and tradeoff_ok and batch_ok and consistency < 1.0, details

    return _timed(7, "iteration-complexity orders and step-size self-consistency", None, body)


def step_size_consistency() -> float:
    """Largest ``bias(h*) / (eps/2)`` over a grid; below one when ``h*`` delivers its promise."""
    worst = 0.0
    for d in (2, 5, 10, 20, 40):
        for beta in (d + 1.0, (d + 3.0) / 2.0, 2.0 * d):
            try:
                dl = delta(beta, d, 2.0)
            except ValueError:
                continue
            mom = analytic_moments_student(d, beta)
            for eps in (0.1, 0.5, 1.0, 2.0):
                h = step_size_for_accuracy(eps, d, beta, 2.0, 2.0, dl, mom.ev, mom.egrad2)
                p = contraction_params(h, 2.0, 2.0, beta, dl, d, mom.ev, mom.egrad2)
                worst = max(worst, asymptotic_bias(p) / (eps / 2.0))
    return worst


# 8 ---------------------------------------------------------------------------

def check_gamma_ratio() -> CheckResult:
    def body():
        checked, bad = 0, []
        for d in range(1, 21):
            beta = d / 2 + 1.5
            while beta <= 2 * d + 1e-12:
                upper = beta - d / 2 - 1
                for j in range(1, 11):
                    r = upper * j / 11
                    ratio, bound = gamma_ratio_and_bound(beta, d, r)
                    checked += 1
                    # d = 2 is an exact equality case; allow round-off of the log-space ratio
                    if not ratio <= bound * (1.0 + RATIO_RTOL):
                        bad.append((d, beta, r, ratio, bound))
                beta += 0.5
        return not bad, {"checked": checked, "counterexamples": bad[:10]}

    return _timed(8, "Gamma-ratio closed-form bound", None, body)


# 9 ---------------------------------------------------------------------------

def check_wpi_constants() -> CheckResult:
    def body():
        d, nu = 10, 3
        beta = (d + nu) / 2
        c_wpi = wpi_constant_student_small_beta(d, beta)
        expected = 144 / 429
        rel = abs(c_wpi - expected) / expected
        gamma = beta / (d + 2)
        cvg = student_cv_gamma(d, beta)
        small_identity = chi2_rate_small_beta(beta, gamma, cvg, d) * wpi_constant_small_beta(beta, gamma, cvg, d)
        strong_identity = chi2_rate_strongly_convex(2.0, 11.0, 2.0) * wpi_constant_strongly_convex(2.0, 11.0, 2.0)
        ok_value = rel <= 1e-12
        ok_small = abs(small_identity - 1.0) <= 1e-12
        ok_strong = abs(strong_identity - 2.0) / 2.0 <= 1e-12
        details = {"c_wpi": c_wpi, "expected": expected, "relative_error": rel,
                   "value_matches": ok_value, "small_beta_identity": small_identity,
                   "strongly_convex_identity": strong_identity}
        return ok_value and ok_small and ok_strong, details

    return _timed(9, "weighted Poincare constants and rate identities", None, body)


# 10 --------------------------------------------------------------------------

def ula_step_size(beta: float, lipschitz: float) -> float:
    """``1 / Lip(grad log pi)``; the Hessian of ``beta log V`` peaks at ``beta L`` at the mode."""
    return 1.0 / (beta * lipschitz)


def check_oracle_validity(n: int = 100_000, chains: int = 4096, steps: int = 2000) -> CheckResult:
    def body():
        details, ok = {}, True
        crit = ks_critical_value(n, 0.01)
        for i, (d, beta) in enumerate(((2, 3.0), (10, 11.0), (10, 6.5))):
            t = isotropic_student(d, beta)
            ks = radial_beta_ks(reference_sample(t, n, _rng(20 + i)).states, t)
            details[f"reference d={d} beta={beta}"] = {"ks": ks, "critical": crit}
            ok &= ks < crit
        t = isotropic_student(10, 6.5)
        dl = delta(t.beta, t.d, t.cv)
        h = first_order_step_bound(t.alpha, t.lipschitz, t.beta, dl) / 2
        weighted = run_ensemble(t, SamplerConfig(h=h, iterations=steps, chains=chains, seed=SEED), [steps])[0]
        h_ula = ula_step_size(t.beta, t.lipschitz)
        ula = run_ensemble(t, SamplerConfig(h=h_ula, iterations=steps, chains=chains, algorithm=ULA, seed=SEED),
                           [steps])[0]
        ks_w, ks_u = radial_beta_ks(weighted.states, t), radial_beta_ks(ula.states, t)
        details["negative_control"] = {"ks_weighted": ks_w, "ks_ula": ks_u, "h_weighted": h, "h_ula": h_ula,
                                       "critical": ks_critical_value(chains, 0.01)}
        return ok and ks_u > ks_w, details

    return _timed(10, "exact sampler passes the radial KS test; ULA control does worse", None, body)


# 11 --------------------------------------------------------------------------

def determinism_spec() -> ExperimentSpec:
    return ExperimentSpec(
        scenario="determinism",
        target=TargetBlock("isotropic-student", 10, 11.0),
        sampler=SamplerBlock(h=0.00625, iterations=200, chains=2048, seed=SEED),
        eps=0.5,
        reference_size=4096,
        record=(0, 50, 200),
        n_proj=32,
    )


def check_determinism(threads: tuple = (1, 3)) -> CheckResult:
    def body():
        spec = determinism_spec()
        digests = []
        with tempfile.TemporaryDirectory() as tmp:
            for i, th in enumerate(threads):
                res = run_experiment(replace(spec, output=""), Path(tmp) / f"t{i}", threads=th)
                digests.append({k: res.files[k].read_bytes() for k in ("snapshots", "metrics", "theory")})
        same = all(dg == digests[0] for dg in digests[1:])
        return same, {"threads": list(threads), "identical": same}

    return _timed(11, "outputs independent of thread count", None, body)


CHECKS: dict[int, Callable[[], CheckResult]] = {
    1: check_analytic_moments,
    2: check_delta_values,
    3: check_zo_bias,
    4: check_zo_variance,
    5: check_moment_difference,
    6: check_bias_floor,
    7: check_complexity_orders,
    8: check_gamma_ratio,
    9: check_wpi_constants,
    10: check_oracle_validity,
    11: check_determinism,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def run_checks(numbers=None, results_path: Optional[Path] = None, echo: Callable[[str], None] = print) -> list[CheckResult]:
    """Run the selected checks (all by default), print one line each, optionally write JSON."""
    selected = sorted(CHECKS) if numbers is None else sorted(numbers)
    results = []
    for number in selected:
        res = CHECKS[number]()
        echo(res.line())
        results.append(res)
    if results_path is not None:
        payload = {"passed": all(r.passed for r in results), "checks": [_jsonable(asdict(r)) for r in results]}
        Path(results_path).parent.mkdir(parents=True, exist_ok=True)
        Path(results_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return results
