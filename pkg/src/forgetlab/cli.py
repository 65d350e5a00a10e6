"""Command-line front end.

Subcommands::

    theory-sweep   closed-form values over an (alpha, beta) or (p, d, m) grid
    mc-forgetting  Monte Carlo forgetting next to the closed form
    moments        exact Haar moment of one exponent matrix
    validate       bundled consistency checks, JSON report
    avgcase        average-case risk curves on synthetic data

Exit codes: 0 success, 1 failed validation or computation, 2 usage error,
3 I/O error.
"""

import argparse
import csv
from fractions import Fraction
import io
import json
import math
import os
import shlex
import sys

import numpy as np

from . import __version__
from .avgcase import AvgCaseConfig, argmax_alpha, simulate_average_case
from .continual import (
    ProblemInstance,
    forgetting_samples,
    make_worst_case_x,
    mc_lemma_term,
)
from .moments import (
    MatrixParseError,
    load_golden_table,
    mc_monomial_expectation,
    monomial_expectation,
    parse_power_matrix,
)
from .stats import summarize
from .theory import (
    asymptotic_worst_case,
    assembled_worst_case,
    exact_worst_case,
    lemma_diag,
    lemma_offdiag,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
PROG = "forgetlab"
SWEEP_HEADER = ["p", "d", "m", "alpha", "beta", "analytic", "mc_mean",
                "mc_stderr", "trials", "seed"]
# flags that change how a run executes but never what it outputs; they are
# left out of the recorded command line so outputs stay byte-comparable
_EXECUTION_FLAGS = ("--threads", "--out")


class UsageError(ValueError):
    pass


def parse_int_list(text):
    """``"2,10:100:10"`` -> [2, 10, 20, ..., 100]; ranges include the stop."""
    out = []
    for item in text.split(","):
        item = item.strip()
        try:
            if ":" in item:
                start, stop, step = (int(v) for v in item.split(":"))
                if step <= 0:
                    raise ValueError
                out.extend(range(start, stop + 1, step))
            else:
                out.append(int(item))
        except ValueError:
            raise UsageError(f"bad integer list item {item!r}") from None
    return out


def parse_grid(text):
    """``"0:1:101"`` -> 101 evenly spaced points, or a comma list.

    Points are exact fractions so grid values like 0.3 are not perturbed
    before the closed forms see them.
    """
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            a, b, n = Fraction(start), Fraction(stop), int(num)
            if n < 1:
                raise ValueError
            if n == 1:
                return [a]
            return [a + (b - a) * k / (n - 1) for k in range(n)]
        return [Fraction(v.strip()) for v in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad grid {text!r}") from None


def recorded_command(argv):
    """Command line as recorded in output metadata (execution flags dropped)."""
    kept = []
    skip = False
    for arg in argv:
        if skip:
            skip = False
            continue
        if arg in _EXECUTION_FLAGS:
            skip = True
            continue
        if any(arg.startswith(f + "=") for f in _EXECUTION_FLAGS):
            continue
        kept.append(arg)
    return shlex.join([PROG] + kept)


def _num(v):
    """Format a value for CSV; missing values become empty fields."""
    if v is None:
        return ""
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def render(header, rows, meta, fmt, notes=()):
    if fmt == "json":
        doc = {"metadata": dict(meta, notes=list(notes)),
               "rows": [{k: _json_value(v) for k, v in zip(header, r)}
                        for r in rows]}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# {PROG} {meta['version']} | command: {meta['command']}"
              f" | seed: {meta['seed']}\n")
    for note in notes:
        buf.write(f"# {note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_num(v) for v in r])
    return buf.getvalue()


def emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _meta(args):
    return {"tool": PROG, "version": __version__,
            "command": args.recorded_command, "seed": args.seed}


def cmd_theory_sweep(args):
    if args.p is None:
        alphas = parse_grid(args.alpha_grid)
        betas = parse_grid(args.beta_grid)
        header = ["alpha", "beta", "asymptotic"]
        rows = [[a, b, asymptotic_worst_case(a, b, exact=True)]
                for b in betas for a in alphas]
    else:
        if args.d is None or args.m is None:
            raise UsageError("--d and --m are required together with --p")
        header = ["p", "d", "m", "alpha", "beta", "exact", "asymptotic"]
        rows = []
        for p in parse_int_list(args.p):
            for d in parse_int_list(args.d):
                for m in parse_int_list(args.m):
                    a, b = Fraction(m, p), 1 - Fraction(d, p)
                    rows.append([p, d, m, a, b, exact_worst_case(p, d, m),
                                 asymptotic_worst_case(a, b, exact=True)])
    emit(render(header, rows, _meta(args), args.format), args.out)
    return EXIT_OK


def _cell_seed(seed, *cell):
    state = np.random.SeedSequence([seed, *cell]).generate_state(1, np.uint64)
    return int(state[0])


def worst_case_instance(p, d, m, n, seed):
    """Equal-singular-value data and a Gaussian teacher for one sweep cell."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, p, d, n]))
    x = make_worst_case_x(n, p, d, rng)
    return ProblemInstance(x, rng.standard_normal(p), m)


def sweep_rows(ps, ds, ms, trials, seed, threads, n=None):
    """SweepResult rows for every (p, d, m) cell, in grid order."""
    rows = []
    for p in ps:
        for d in ds:
            for m in ms:
                try:
                    inst = worst_case_instance(p, d, m, n or d, seed)
                    samples = forgetting_samples(
                        inst, trials, _cell_seed(seed, p, d, m), threads=threads)
                except Exception as exc:
                    raise RuntimeError(f"cell p={p} d={d} m={m}: {exc}") from exc
                est = summarize(samples, seed)
                analytic = (exact_worst_case(p, d, m)
                            if p >= 4 and m >= 2 else None)
                rows.append([p, d, m, Fraction(m, p), 1 - Fraction(d, p),
                             analytic, est.mean, est.stderr, trials, seed])
    return rows


def cmd_mc_forgetting(args):
    if args.p is None or args.d is None or args.m is None:
        raise UsageError("mc-forgetting needs --p, --d and --m")
    rows = sweep_rows(parse_int_list(args.p), parse_int_list(args.d),
                      parse_int_list(args.m), args.trials, args.seed,
                      args.threads, args.n)
    notes = []
    if args.trials == 1:
        notes.append("warning: mc_stderr missing (undefined for trials=1)")
        print("warning: mc_stderr is undefined for trials=1 and left empty",
              file=sys.stderr)
    emit(render(SWEEP_HEADER, rows, _meta(args), args.format, notes), args.out)
    return EXIT_OK


def cmd_moments(args):
    try:
        mat = parse_power_matrix(args.matrix)
    except MatrixParseError as exc:
        raise UsageError(f"parse error: {exc}") from exc
    if args.p is None:
        raise UsageError("moments needs --p")
    p = int(args.p)
    value = monomial_expectation(mat, p)
    lines = [str(value), f"decimal: {float(value)!r}"]
    if args.mc:
        est = mc_monomial_expectation(mat, p, args.mc, args.seed)
        lines.append(f"mc: mean={est.mean!r} stderr={est.stderr!r} "
                     f"trials={est.trials} seed={est.seed}")
    emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _check(name, ok, **detail):
    return {"name": name, "passed": bool(ok),
            **{k: _json_value(v) for k, v in detail.items()}}


def suite_tables(args):
    checks = []
    for entry in load_golden_table():
        for p in (4, 6, 10, 25):
            if max(len(entry.matrix), len(entry.matrix[0])) > p:
                continue
            got = monomial_expectation(entry.matrix, p)
            want = entry.value(p)
            checks.append(_check(f"{entry.matrix} p={p}", got == want,
                                 got=str(got), expected=str(want)))
    return checks


def suite_lemmas(args):
    p, d, m = 10, 4, 3
    trials = args.trials
    checks = []
    for name, exact, (i, j) in (("lemma_diag", lemma_diag(p, d, m), (1, 1)),
                                ("lemma_offdiag", lemma_offdiag(p, d, m), (1, 2))):
        est = mc_lemma_term(p, d, m, i, j, trials, args.seed)
        z = est.zscore(exact)
        checks.append(_check(f"{name} p={p} d={d} m={m}", z <= 3,
                             exact=exact, mc_mean=est.mean,
                             mc_stderr=est.stderr, z=z))
    return checks


def suite_assembly(args):
    checks = []
    for p in range(4, 13):
        for d in range(1, p + 1):
            for m in range(2, p + 1):
                ok = exact_worst_case(p, d, m) == assembled_worst_case(p, d, m)
                checks.append(_check(f"p={p} d={d} m={m}", ok))
    return checks


def suite_saturation(args):
    p = 30
    rows = sweep_rows([p], [1, 15, 29], [2, 10, 20, 30], args.trials,
                      args.seed, args.threads)
    checks = []
    zs = []
    for r in rows:
        _, d, m, _, _, analytic, mean, stderr, _, _ = r
        z = abs(mean - float(analytic)) / stderr
        zs.append(z)
        checks.append(_check(f"p={p} d={d} m={m}", z <= 4, analytic=analytic,
                             mc_mean=mean, mc_stderr=stderr, z=z))
    frac = sum(z <= 3 for z in zs) / len(zs)
    checks.append(_check("fraction within 3 stderr >= 0.95", frac >= 0.95,
                         fraction=frac))
    return checks


SUITES = {"tables": suite_tables, "lemmas": suite_lemmas,
          "assembly": suite_assembly, "saturation": suite_saturation}


def cmd_validate(args):
    checks = SUITES[args.suite](args)
    failures = [c["name"] for c in checks if not c["passed"]]
    report = {"suite": args.suite, "passed": not failures,
              "n_checks": len(checks), "failures": failures,
              "metadata": _meta(args), "checks": checks}
    emit(json.dumps(report, indent=1) + "\n", args.out)
    return EXIT_OK if not failures else EXIT_FAIL


def cmd_avgcase(args):
    defaults = AvgCaseConfig()
    cfg = AvgCaseConfig(
        p_list=tuple(parse_int_list(args.p)) if args.p else defaults.p_list,
        d=int(args.d) if args.d else defaults.d,
        n=args.n or defaults.n,
        noise_sd=args.noise_sd,
        alphas=(tuple(float(a) for a in parse_grid(args.alpha_grid))
                if args.alpha_grid else defaults.alphas),
        trials=args.avg_trials or defaults.trials,
        seed=args.seed,
    )
    table = simulate_average_case(cfg, threads=args.threads)
    header = ["p", "alpha", "estimator", "metric", "mean", "stderr"]
    rows = [[r.p, r.alpha, r.estimator, r.metric, r.mean, r.stderr]
            for r in table.rows]
    notes = ["note: default sizes are placeholders, not reference settings",
             f"config: d={cfg.d} n={cfg.n} noise_sd={cfg.noise_sd} "
             f"trials={cfg.trials}"]
    notes += [f"argmax alpha of forgetting at p={p}: {argmax_alpha(table, p)!r}"
              for p in cfg.p_list]
    emit(render(header, rows, _meta(args), args.format, notes), args.out)
    return EXIT_OK


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42,
                        help="master seed (default 42)")
    common.add_argument("--threads", type=_positive_int,
                        default=os.cpu_count() or 1,
                        help="worker threads (default: available cores)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--p", help="integer list, e.g. 100 or 4,6:12:2")
    grid.add_argument("--d", help="integer list")
    grid.add_argument("--m", help="integer list, e.g. 2,10:100:10")

    parser = argparse.ArgumentParser(
        prog=PROG, description="Forgetting under random block rotations.")
    parser.add_argument("--version", action="version",
                        version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("theory-sweep", parents=[common, grid],
                        help="closed-form values over a grid")
    sp.add_argument("--alpha-grid", default="0:1:101",
                    help="start:stop:count or comma list (default 0:1:101)")
    sp.add_argument("--beta-grid", default="0:1:101")
    sp.set_defaults(func=cmd_theory_sweep)

    sp = sub.add_parser("mc-forgetting", parents=[common, grid],
                        help="Monte Carlo forgetting vs the closed form")
    sp.add_argument("--trials", type=_positive_int, default=1000)
    sp.add_argument("--n", type=_positive_int,
                    help="rows of the data matrix (default d)")
    sp.set_defaults(func=cmd_mc_forgetting)

    sp = sub.add_parser("moments", parents=[common],
                        help="exact Haar moment of an exponent matrix")
    sp.add_argument("matrix", help='rows split by ";", entries by ","')
    sp.add_argument("--p", type=_positive_int, help="matrix size of O(p)")
    sp.add_argument("--mc", type=_positive_int, metavar="TRIALS",
                    help="also print a Monte Carlo estimate")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("validate", parents=[common],
                        help="run a bundled check suite")
    sp.add_argument("suite", choices=sorted(SUITES))
    sp.add_argument("--trials", type=_positive_int, default=1000)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("avgcase", parents=[common],
                        help="average-case curves on synthetic data")
    sp.add_argument("--p", help="integer list of dimensions")
    sp.add_argument("--d", help="subspace dimension")
    sp.add_argument("--n", type=_positive_int, help="samples per task")
    sp.add_argument("--noise-sd", type=float, default=0.0)
    sp.add_argument("--alpha-grid")
    sp.add_argument("--trials", dest="avg_trials", type=_positive_int,
                    help="trials per cell (default: placeholder setting)")
    sp.set_defaults(func=cmd_avgcase)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.recorded_command = recorded_command(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{PROG}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
