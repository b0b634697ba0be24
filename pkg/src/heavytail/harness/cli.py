"""Command line entry point ``heavytail``.

Subcommands::

    heavytail run <spec|preset>               sample, measure and write artifacts
    heavytail complexity-table <grid|preset>  iteration counts over dimensions
    heavytail moments <spec|preset>           analytic vs Monte Carlo moments
    heavytail verify [--only N ...]           acceptance checks

Global flags ``--seed``, ``--out`` and ``--threads``.  The default output
directory comes from ``$HEAVYTAIL_OUT`` (falling back to ``./heavytail-out``).

Exit codes: 0 success, 1 a verify check failed, 2 invalid spec or violated
precondition, 3 a chain diverged under the abort policy.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..metrics import robust_moment
from ..samplers import ChainDivergedError
from ..targets import reference_sample
from ..theory import InapplicableError, analytic_moments_student
from .complexity import COLUMNS, complexity_rows, load_grid
from .config import ConfigError, load_spec
from .runner import reference_generator, rows_csv, run_experiment
from .validation import SpecValidationError, validate

OUT_ENV = "HEAVYTAIL_OUT"
EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2, 3

MOMENT_COLUMNS = ("quantity", "analytic", "provenance", "estimate", "se", "blocks", "n")


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "heavytail-out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavytail", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the spec seed")
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run an experiment spec or preset")
    p.add_argument("spec")
    p = sub.add_parser("complexity-table", parents=[common], help="tabulate iteration counts")
    p.add_argument("spec")
    p = sub.add_parser("moments", parents=[common], help="compare analytic and sampled moments")
    p.add_argument("spec")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", type=int, nargs="+", default=None, help="criterion numbers to run")
    return parser


def _out_dir(args, name: str) -> Path:
    base = args.out if args.out is not None else default_out() / name
    return Path(base)


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    out = _out_dir(args, spec.scenario)
    spec = spec.with_overrides(seed=args.seed, output=str(out))
    result = run_experiment(spec, out, threads=args.threads)
    last = result.metrics[-1]
    print(f"wrote {out}: final sliced W2 {last.sliced_w2:.4g} (noise floor {result.noise_floor:.4g})")
    return EXIT_OK


def cmd_complexity(args) -> int:
    grid = load_grid(args.spec)
    out = _out_dir(args, "complexity")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "complexity.csv"
    path.write_text(rows_csv(complexity_rows(grid), COLUMNS))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_moments(args) -> int:
    spec = load_spec(args.spec).with_overrides(seed=args.seed)
    target = validate(spec)
    sigma = target.sigma if target.kind == "anisotropic-student" else None
    exact = analytic_moments_student(target.d, target.beta, sigma)
    x = reference_sample(target, spec.reference_size, reference_generator(spec.sampler.seed)).states
    blocks = 200 if target.beta <= target.d / 2 + 2 else 1
    rows = []
    for name, f, value, prov in (("ev", "V", exact.ev, exact.ev_provenance),
                                 ("egrad2", "grad2", exact.egrad2, exact.egrad2_provenance)):
        est = robust_moment(x, f, blocks, target)
        rows.append({"quantity": name, "analytic": value, "provenance": prov, "estimate": est.value,
                     "se": est.se, "blocks": est.blocks, "n": est.n})
    out = _out_dir(args, spec.scenario)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "moments.csv"
    path.write_text(rows_csv(rows, MOMENT_COLUMNS))
    for r in rows:
        print(f"{r['quantity']}: analytic {r['analytic']:.6g} ({r['provenance']}), sampled {r['estimate']:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    out = _out_dir(args, "verify")
    results = run_checks(args.only, out / "verify.json")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed; results in {out / 'verify.json'}")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


COMMANDS = {"run": cmd_run, "complexity-table": cmd_complexity, "moments": cmd_moments, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except SpecValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, InapplicableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ChainDivergedError as exc:
        print(f"error: {exc}; last state norm {float(np.linalg.norm(exc.x)):.3g}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
