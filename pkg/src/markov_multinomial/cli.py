"""
Command-line interface.

Subcommands: ``moments``, ``simulate``, ``compare``, ``posterior``.

Exit codes
----------
0  success (``compare``: moments agree)
2  an input file could not be parsed
3  an input file parsed but is invalid
4  bad command-line arguments
5  ``compare``: empirical and exact moments disagree
6  ``posterior``: prior and data have different numbers of states
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bayes import DirichletRows, count_transitions, posterior_update, uniform_prior
from .core import moment_trajectory
from .errors import DimensionMismatchError, ModelError, TimeVaryingUnsupportedError
from .formats import (
    SCHEMA,
    ModelFileSyntaxError,
    atomic_open,
    atomic_write,
    csv_text,
    parse_model,
    read_csv_with_meta,
    text_digest,
)
from .microsim import RNG_NAME, compare, replication_rng, simulate_cohort, summarize
from .microsim import simulate_replications

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_ARGS = 4
EXIT_MISMATCH = 5
EXIT_DIMENSION = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def _ratio_band(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    if not 0 < lo <= 1 <= hi:
        raise argparse.ArgumentTypeError("band must satisfy 0 < LO <= 1 <= HI")
    return lo, hi


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load(args, path=None):
    text = _read(path or args.model)
    model = parse_model(text, hold_last=True if args.hold_last else None,
                        renormalize=args.renormalize_rows)
    return model, text


def _base_meta(kind, model_text, spec):
    return [
        ("schema", SCHEMA),
        ("kind", kind),
        ("version", __version__),
        ("model_sha256", text_digest(model_text)),
        ("states", ",".join(spec.state_space.labels)),
        ("n0", spec.n0),
        ("horizon", spec.horizon),
        ("cycle_length", repr(spec.cycle_length)),
    ]


def _sibling(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def _seed(args, model):
    seed = args.seed if args.seed is not None else model.seed
    if seed is None:
        raise UsageError("no --seed given and the model file sets no seed")
    if seed < 0:
        raise UsageError("--seed must be non-negative")
    return seed


def _replications(args):
    if args.replications < 2:
        raise UsageError(f"--replications must be at least 2, got {args.replications}")
    return args.replications


def cmd_moments(args):
    model, text = _load(args)
    spec = model.spec
    traj = moment_trajectory(spec)
    labels = spec.state_space.labels
    var, sd = traj.variance, traj.sd
    rows = [(z, labels[k], traj.mean[z, k], var[z, k], sd[z, k])
            for z in range(spec.horizon + 1) for k in range(spec.s)]
    cov_rows = [(z, labels[u], labels[v], traj.covariance[z, u, v])
                for z in range(spec.horizon + 1) for u in range(spec.s) for v in range(spec.s)]
    cov_out = args.cov_out or _sibling(args.out, "_cov.csv")
    main = csv_text(_base_meta("moments", text, spec),
                    ["cycle", "state", "mean", "variance", "sd"], rows)
    cov = csv_text(_base_meta("moments-covariance", text, spec),
                   ["cycle", "state_u", "state_v", "cov"], cov_rows)
    atomic_write(args.out, main)
    atomic_write(cov_out, cov)
    return EXIT_OK


def _simulation_meta(text, spec, r, seed):
    return _base_meta("simulation", text, spec) + [
        ("replications", r),
        ("seed", seed),
        ("rng", RNG_NAME),
    ]


def _store_paths(spec, r, seed, path, text):
    """Simulate replication by replication, streaming every path to ``path``."""
    counts = np.empty((r, spec.horizon + 1, spec.s), dtype=np.int64)
    meta = _base_meta("paths", text, spec) + [
        ("replications", r), ("seed", seed), ("rng", RNG_NAME),
        ("schedule_matrices", len(spec.schedule)),
        ("index_base", 0),
    ]
    with atomic_open(path) as fh:
        fh.write(csv_text(meta, ["replication", "individual", "path"], []))
        for i in range(r):
            counts[i], paths = simulate_cohort(spec, replication_rng(seed, i), return_paths=True)
            fh.writelines(f"{i},{j},{' '.join(map(str, p))}\n" for j, p in enumerate(paths.tolist()))
    return counts


def _workers(args):
    if args.workers < 1:
        raise UsageError(f"--workers must be at least 1, got {args.workers}")
    return args.workers


def cmd_simulate(args):
    model, text = _load(args)
    spec = model.spec
    r = _replications(args)
    _workers(args)
    seed = _seed(args, model)
    if args.store_paths:
        counts = _store_paths(spec, r, seed, args.store_paths, text)
    else:
        counts = simulate_replications(spec, r, seed, workers=args.workers)
    summary = summarize(counts, seed=seed)
    labels = spec.state_space.labels
    rows = [(z, labels[k], summary.empirical_mean[z, k], summary.empirical_variance[z, k], r, seed)
            for z in range(spec.horizon + 1) for k in range(spec.s)]
    atomic_write(args.out, csv_text(
        _simulation_meta(text, spec, r, seed),
        ["cycle", "state", "empirical_mean", "empirical_variance", "replications", "seed"],
        rows))
    return EXIT_OK


def cmd_compare(args):
    model, text = _load(args)
    spec = model.spec
    r = _replications(args)
    _workers(args)
    seed = _seed(args, model)
    analytic_spec, analytic_text = spec, text
    if args.analytic_model:
        analytic, analytic_text = _load(args, args.analytic_model)
        analytic_spec = analytic.spec
        if (analytic_spec.s, analytic_spec.horizon, analytic_spec.n0) != (spec.s, spec.horizon, spec.n0):
            raise ModelError("analytic model must match the simulated model's states, n0 and horizon")
    summary = summarize(simulate_replications(spec, r, seed, workers=args.workers), seed=seed)
    report = compare(summary, moment_trajectory(analytic_spec),
                     z_threshold=args.z_threshold, ratio_band=args.ratio_band)
    labels = spec.state_space.labels
    cell_ok = np.where(report.checked, report.z_ok & report.ratio_ok,
                       np.where(report.degenerate, report.degenerate_ok, True))
    rows = []
    for z in range(spec.horizon + 1):
        for k in range(spec.s):
            rows.append((
                z, labels[k], report.analytic_mean[z, k], report.empirical_mean[z, k],
                "" if report.degenerate[z, k] else report.mean_z[z, k],
                report.analytic_variance[z, k], report.empirical_variance[z, k],
                "" if np.isnan(report.variance_ratio[z, k]) else report.variance_ratio[z, k],
                "1" if report.degenerate[z, k] else "0",
                "1" if cell_ok[z, k] else "0",
            ))
    meta = _simulation_meta(text, spec, r, seed) + [
        ("analytic_model_sha256", text_digest(analytic_text)),
        ("z_threshold", repr(float(args.z_threshold))),
        ("ratio_band", f"{args.ratio_band[0]!r},{args.ratio_band[1]!r}"),
        ("passed", "true" if report.passed else "false"),
    ]
    summary_text = report.summary(labels)
    atomic_write(args.report, csv_text(
        meta,
        ["cycle", "state", "analytic_mean", "empirical_mean", "mean_z", "analytic_variance",
         "empirical_variance", "variance_ratio", "degenerate", "cell_ok"],
        rows))
    atomic_write(_sibling(args.report, ".summary.txt"), summary_text + "\n")
    print(summary_text)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def _labels_from_meta(meta):
    if "states" in meta and meta["states"]:
        return tuple(label.strip() for label in meta["states"].split(","))
    return None


def _read_data(path):
    """Transition counts and state labels (or None) from a counts or paths file."""
    meta, header, rows = read_csv_with_meta(_read(path))
    labels = _labels_from_meta(meta)
    if header[:3] == ["replication", "individual", "path"]:
        if labels is None:
            raise ModelError(f"{path}: paths file has no '# states:' line")
        n_mats = int(meta.get("schedule_matrices", "1"))
        if n_mats > 1:
            raise TimeVaryingUnsupportedError(
                f"{path}: paths come from a schedule with {n_mats} matrices")
        paths = []
        for lineno, row in enumerate(rows, start=1):
            try:
                paths.append([int(v) for v in row[2].split()])
            except (ValueError, IndexError):
                raise ModelFileSyntaxError(f"{path}: bad path record {row!r}", lineno) from None
        return count_transitions(paths, len(labels)), labels
    if header and header[:3] != ["from", "to", "count"]:
        raise ModelFileSyntaxError(f"{path}: expected columns from,to,count or "
                                   "replication,individual,path")
    records = []
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise ModelFileSyntaxError(f"{path}: expected 3 fields, got {row!r}", lineno)
        try:
            n = int(row[2])
        except ValueError:
            raise ModelFileSyntaxError(f"{path}: count {row[2]!r} is not an integer", lineno) from None
        if n < 0:
            raise ModelError(f"{path}: record {lineno}: negative count")
        records.append((row[0].strip(), row[1].strip(), n))
    return records, labels


def _read_prior(path):
    meta, header, rows = read_csv_with_meta(_read(path))
    column = next((c for c in ("alpha", "posterior_alpha") if c in header), None)
    if header[:2] != ["from", "to"] or column is None:
        raise ModelFileSyntaxError(f"{path}: expected columns from,to,alpha")
    idx = header.index(column)
    entries = {}
    order = []
    for lineno, row in enumerate(rows, start=1):
        try:
            a = float(row[idx])
        except (ValueError, IndexError):
            raise ModelFileSyntaxError(f"{path}: bad alpha in {row!r}", lineno) from None
        src, dst = row[0].strip(), row[1].strip()
        if src not in order:
            order.append(src)
        entries[src, dst] = a
    labels = _labels_from_meta(meta) or tuple(order)
    s = len(labels)
    alphas = np.empty((s, s))
    for k, src in enumerate(labels):
        for l, dst in enumerate(labels):
            if (src, dst) not in entries:
                raise ModelError(f"{path}: missing alpha for {src} -> {dst}")
            alphas[k, l] = entries[src, dst]
    if len(entries) != s * s:
        raise ModelError(f"{path}: alphas reference states outside {', '.join(labels)}")
    return DirichletRows(alphas), labels


def cmd_posterior(args):
    data, data_labels = _read_data(args.data)
    prior_labels = None
    if args.prior:
        prior, prior_labels = _read_prior(args.prior)
    model_labels = None
    if args.model:
        model_labels = parse_model(_read(args.model)).spec.state_space.labels
    labels = data_labels or prior_labels or model_labels
    if labels is None:
        raise ModelError("cannot determine the states: give --prior or --model, "
                         "or a data file with a '# states:' line")
    for other in (prior_labels, model_labels):
        if other is not None and len(other) != len(labels):
            raise DimensionMismatchError(
                f"prior/model have {len(other)} states, data has {len(labels)}")
        if other is not None and tuple(other) != tuple(labels):
            raise ModelError(f"state labels differ: {', '.join(other)} vs {', '.join(labels)}")
    s = len(labels)
    if isinstance(data, list):
        counts = np.zeros((s, s), dtype=np.int64)
        for src, dst, n in data:
            for name in (src, dst):
                if name not in labels:
                    raise ModelError(f"{args.data}: unknown state {name!r}")
            counts[labels.index(src), labels.index(dst)] += n
    else:
        counts = data
    if not args.prior:
        prior = uniform_prior(s)
    post = posterior_update(prior, counts)
    mean = post.alphas / post.alphas.sum(axis=1, keepdims=True)
    rows = [(labels[k], labels[l], prior.alphas[k, l], int(counts[k, l]),
             post.alphas[k, l], mean[k, l]) for k in range(s) for l in range(s)]
    meta = [
        ("schema", SCHEMA),
        ("kind", "posterior"),
        ("version", __version__),
        ("states", ",".join(labels)),
        ("prior", args.prior or "uniform (all alphas 1)"),
        ("data_sha256", text_digest(_read(args.data))),
    ]
    atomic_write(args.out, csv_text(
        meta, ["from", "to", "prior_alpha", "count", "posterior_alpha", "posterior_mean"], rows))
    print(f"prior: {args.prior or 'uniform (all alphas 1)'}")
    for k in range(s):
        print(f"  {labels[k]}: " + " ".join(repr(float(a)) for a in prior.alphas[k]))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="markov-multinomial",
                     description="Exact and simulated moments of Markov cohort models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_opts(p):
        p.add_argument("--model", required=True, help="model file")
        p.add_argument("--hold-last", action="store_true",
                       help="keep applying the last matrix past the end of the schedule")
        p.add_argument("--renormalize-rows", action="store_true",
                       help="rescale rows that do not sum to 1 (with a warning) instead of failing")

    def sim_opts(p):
        p.add_argument("--replications", type=int, default=1000)
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (defaults to the model file's seed)")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("moments", help="exact mean/variance/covariance per cycle")
    model_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--cov-out", default=None,
                   help="full covariance CSV (default: <out>_cov.csv)")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("simulate", help="replicated microsimulation")
    model_opts(p)
    sim_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--store-paths", default=None, metavar="PATH",
                   help="also write every individual path to PATH")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="microsimulation vs exact moments")
    model_opts(p)
    sim_opts(p)
    p.add_argument("--report", required=True)
    p.add_argument("--analytic-model", default=None,
                   help="model for the exact moments (default: --model)")
    p.add_argument("--z-threshold", type=float, default=4.0)
    p.add_argument("--ratio-band", type=_ratio_band, default=(0.85, 1.15), metavar="LO,HI")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("posterior", help="Dirichlet posterior of the transition matrix")
    p.add_argument("data", help="counts file (from,to,count) or paths file")
    p.add_argument("--prior", default=None, help="prior alphas (from,to,alpha); default uniform")
    p.add_argument("--model", default=None, help="model file supplying the states")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_posterior)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ModelFileSyntaxError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionMismatchError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except ModelError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
