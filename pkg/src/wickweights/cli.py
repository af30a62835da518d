"""Command-line interface.

Subcommands
-----------
weights    print the coefficient table of a weight function
moment     Gaussian average of a product of trace invariants
integrate  weighted integral of an entry monomial
verify     check the defining conditions and measure the next error order
sample     Monte Carlo estimate of a concrete monomial, optionally checked

Exit codes: 0 success, 1 failed verification or cross-check, 2 usage error.
Symbolic output is deterministic; sampling output is reproducible for a
fixed seed.  The weight cache directory can be moved with the environment
variable WICKWEIGHTS_CACHE_DIR (default: ~/.cache/wickweights).
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import cache, wick
from .algebra import PoleError, RatFunc
from .combinatorics import check_partition
from .integrate import error_order, integrate_monomial
from .sampling import cross_check, mc_integrate
from .weights import solve_weight, verify_conditions
from .wick import Ensemble, MonomialSpec, gaussian_trace_moment

_COST_WARNING_KAPPA = 4


def _ensemble(text: str) -> Ensemble:
    try:
        return Ensemble(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown ensemble {text!r}; choose orthogonal, unitary or coe")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return v


def _parse_invariants(text: str) -> list[tuple[int, ...]]:
    """'2,1|1' -> [(2,1), (1)]: comma-separated parts, | between factors."""
    factors = []
    for chunk in text.split("|"):
        chunk = chunk.strip()
        if not chunk:
            raise ValueError("empty invariant factor")
        parts = tuple(sorted((int(x) for x in chunk.split(",")), reverse=True))
        factors.append(check_partition(parts))
    return factors


def _warn_cost(kappa: int) -> None:
    if kappa > _COST_WARNING_KAPPA:
        print(
            f"warning: kappa={kappa} needs Gram entries of total degree {4 * kappa}; "
            "expect a long enumeration",
            file=sys.stderr,
        )


def _partition_label(p: tuple[int, ...]) -> str:
    return "(" + ",".join(str(x) for x in p) + ")"


def _cmd_weights(args) -> int:
    _warn_cost(args.kappa)
    weight = solve_weight(args.ensemble, args.kappa)
    if args.format == "json":
        json.dump(weight.to_json(), sys.stdout, indent=2)
        print()
    else:
        print(f"weight table: ensemble={weight.ensemble.value} kappa={weight.kappa}")
        for p, v in weight.items():
            print(f"  {_partition_label(p):12s} {v}")
    return 0


def _cmd_moment(args) -> int:
    invariants = _parse_invariants(args.invariants)
    value = gaussian_trace_moment(args.ensemble, invariants)
    print(value)
    return 0


def _cmd_integrate(args) -> int:
    _warn_cost(args.kappa)
    monomial = MonomialSpec.parse(args.monomial)
    monomial.validate(args.ensemble)
    weight = solve_weight(args.ensemble, args.kappa)
    expansion = integrate_monomial(weight, monomial)
    if monomial.is_concrete():
        value = expansion.as_ratfunc()
        print(value)
        if args.at is not None:
            exact = value.eval(args.at)
            print(f"= {exact} = {float(exact):.12g} at N = {args.at}")
    else:
        if args.format == "json":
            json.dump(expansion.to_json(), sys.stdout, indent=2)
            print()
        else:
            if not expansion:
                print("0")
            for structure, coeff in expansion.items():
                deltas = "".join(
                    "d(" + ",".join(list(labels) + ([str(a)] if a is not None else [])) + ")"
                    for labels, a in structure
                ) or "1"
                print(f"  {deltas:30s} {coeff}")
            if args.at is not None:
                print(f"-- coefficients at N = {args.at}:")
                for structure, coeff in expansion.items():
                    print(f"  {coeff.eval(args.at)}")
    return 0


def _cmd_verify(args) -> int:
    _warn_cost(args.kappa)
    weight = solve_weight(args.ensemble, args.kappa)
    ok = True
    for k in range(1, args.kappa + 1):
        report = verify_conditions(weight, k)
        print(report)
        ok = ok and report.ok
    beta = error_order(weight, args.kappa + 1)
    bound = args.kappa // 2 + 1
    if beta is None:
        print(f"error order at k={args.kappa + 1}: difference is identically zero")
    else:
        status = "ok" if beta >= bound else "FAILED"
        print(f"error order at k={args.kappa + 1}: observed beta={beta}, bound {bound}: {status}")
        ok = ok and beta >= bound
    return 0 if ok else 1


def _cmd_sample(args) -> int:
    monomial = MonomialSpec.parse(args.monomial)
    monomial.validate(args.ensemble)
    if not monomial.is_concrete():
        raise ValueError("sampling needs concrete integer indices")
    if args.samples < 10_000:
        raise ValueError("need at least 10^4 samples for a usable error estimate")
    if args.expect is not None:
        expected = RatFunc.from_fraction(Fraction(args.expect))
        report = cross_check(expected, args.ensemble, monomial, args.N, args.samples, args.seed)
        json.dump(report.to_json(), sys.stdout)
        print()
        return 0 if report.passed else 1
    est = mc_integrate(args.ensemble, monomial, args.N, args.samples, args.seed)
    json.dump(est.to_json(), sys.stdout)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wickweights",
        description="Exact Wick-contraction integration over O(N), U(N) and the COE.",
        epilog=f"Weight tables are cached under $" + cache.ENV_VAR + " (default ~/.cache/wickweights).",
    )
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="cap on worker processes for the pairing sums")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="coefficient table of a weight function")
    p.add_argument("--ensemble", type=_ensemble, required=True)
    p.add_argument("--kappa", type=_positive_int, required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("moment", help="Gaussian average of trace invariants")
    p.add_argument("--ensemble", type=_ensemble, required=True)
    p.add_argument("--invariants", required=True,
                   help="partitions like '2' or '2,1|1' (| separates factors)")
    p.set_defaults(func=_cmd_moment)

    p = sub.add_parser("integrate", help="weighted integral of an entry monomial")
    p.add_argument("--ensemble", type=_ensemble, required=True)
    p.add_argument("--kappa", type=_positive_int, required=True)
    p.add_argument("--monomial", required=True,
                   help="factors M[i,j] / Mc[i,j]; indices are integers or identifiers")
    p.add_argument("--at", type=int, default=None, help="also evaluate at a concrete dimension")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_integrate)

    p = sub.add_parser("verify", help="check defining conditions and the next error order")
    p.add_argument("--ensemble", type=_ensemble, required=True)
    p.add_argument("--kappa", type=_positive_int, required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sample", help="Monte Carlo estimate of a concrete monomial")
    p.add_argument("--ensemble", type=_ensemble, required=True)
    p.add_argument("--monomial", required=True)
    p.add_argument("--N", type=_positive_int, required=True, help="matrix dimension")
    p.add_argument("--samples", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expect", default=None,
                   help="exact rational to cross-check against, e.g. 1/8")
    p.set_defaults(func=_cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if args.threads is not None:
        wick.DEFAULT_WORKERS = args.threads
    try:
        return args.func(args)
    except PoleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
