"""Command-line entry point: deterministic experiment runs emitting
plot-ready CSV files plus a JSON sidecar recording the resolved
configuration of each run.

Subcommands: theory (closed-form curves and PDF tables), descent
(simulated ensembles vs closed forms, ECDF samples), euler (expected
Euler characteristic curves and 0.5-crossing summary), classify (train
the field classifier on the sine task or IDX digit files) and bench
(compare the compiled and numpy ensemble kernels).

Exit codes: 0 success, 1 statistical band failure, 2 usage error,
3 I/O, format or precision error. Every artifact is written atomically
(temp file then rename) and depends only on the resolved configuration
and seed, so re-runs are byte-identical. GRF_SEED overrides the default
seed; a key = value config file supplies defaults that flags override.
"""

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, backend, classifier, datasets, descent, excursion, theory
from .errors import IdxFormatError, PrecisionLossError, SnapshotFormatError

DEFAULT_OUT = "grf-out"

DESK_ETA_FACTORS = (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0)
EXTENDED_ETA_FACTORS = tuple(np.linspace(0.1, 5.0, 20))


def _atomic_write(path, writer):
    """Run writer(tmp_path) then rename tmp_path onto path."""
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_sidecar(outdir, subcommand, resolved):
    payload = {
        "subcommand": subcommand,
        "package_version": __version__,
        "backend": backend.BACKEND_NAME,
        **resolved,
    }

    def write(p):
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")

    _atomic_write(os.path.join(outdir, "run_config.json"), write)


def _parse_eta_tokens(spec, N):
    """Comma list of learning rates; tokens may be plain numbers or
    multiples of the optimal rate such as 'opt', '0.5opt', '2opt'."""
    etas = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token.endswith("opt"):
            head = token[: -len("opt")]
            factor = 1.0 if head == "" else float(head)
            etas.append(factor * theory.optimal_eta(N))
        else:
            etas.append(float(token))
    if not etas:
        raise argparse.ArgumentTypeError(f"no learning rates in {spec!r}")
    for e in etas:
        if e < 0:
            raise argparse.ArgumentTypeError("learning rates must be nonnegative")
    return etas


def _parse_int_list(spec):
    """Comma list of ints, or inclusive 'a..b' ranges (optionally a..b:step)."""
    out = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            body, _, step = token.partition(":")
            a, _, b = body.partition("..")
            step = int(step) if step else 1
            out.extend(range(int(a), int(b) + 1, step))
        else:
            out.append(int(token))
    if not out:
        raise argparse.ArgumentTypeError(f"no values in {spec!r}")
    return out


def _parse_grid(spec):
    """'lo:hi:count' inclusive float grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be lo:hi:count")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or hi < lo:
        raise argparse.ArgumentTypeError("grid must be lo:hi:count with hi >= lo, count >= 1")
    return np.linspace(lo, hi, count)


def _walk_parsers(parser):
    """The parser and every subcommand parser under it."""
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _walk_parsers(child)


def _load_config_defaults(parser, argv):
    """Apply key = value pairs from --config as parser defaults.

    Subcommands parse into their own namespace, so the defaults have to
    be installed on every subparser, not just the root. Keys that match
    no flag anywhere are rejected.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    defaults = {}
    with open(known.config, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{known.config}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            defaults[key.strip().replace("-", "_")] = value.strip()
    parsers = list(_walk_parsers(parser))
    known_dests = {a.dest for p in parsers for a in p._actions}
    unknown = sorted(set(defaults) - known_dests)
    if unknown:
        raise ValueError(f"{known.config}: unknown keys {', '.join(unknown)}")
    for p in parsers:
        p.set_defaults(**{k: v for k, v in defaults.items()
                          if any(a.dest == k for a in p._actions)})


def cmd_theory(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    N = args.N_single
    wrote = {}
    etas = _parse_eta_tokens(args.etas, N)

    mean = theory.expected_phi1(np.array(etas), N)
    var = theory.var_phi1(np.array(etas), N)
    _atomic_write(
        os.path.join(outdir, "moment_curve.csv"),
        lambda p: theory.write_curve_csv(p, etas, mean, var),
    )
    wrote["moment_curve"] = "moment_curve.csv"

    if args.pdf:
        if args.phi1_grid is not None:
            grid = _parse_grid(args.phi1_grid)
        else:
            lo = min(m - 6.0 * math.sqrt(v) for m, v in zip(mean, var))
            hi = max(m + 6.0 * math.sqrt(v) for m, v in zip(mean, var))
            grid = np.linspace(lo, hi, 401)
        cols = [theory.pdf_phi1(grid, eta, N) for eta in etas]

        def write_pdf(p):
            header = "phi1," + ",".join(f"pdf_eta_{e!r}" for e in etas)
            lines = [header]
            for i, v in enumerate(grid):
                lines.append(
                    f"{float(v)!r}," + ",".join(repr(float(c[i])) for c in cols)
                )
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")

        _atomic_write(os.path.join(outdir, "pdf.csv"), write_pdf)
        wrote["pdf"] = "pdf.csv"

    if args.opt_curve:
        ns = _parse_int_list(args.opt_curve)
        opt_mean = [theory.expected_phi1_at_opt(n) for n in ns]
        opt_var = [float(theory.var_phi1(theory.optimal_eta(n), n)) for n in ns]
        _atomic_write(
            os.path.join(outdir, "opt_curve.csv"),
            lambda p: theory.write_curve_csv(p, [float(n) for n in ns], opt_mean, opt_var),
        )

        def write_table(p):
            lines = ["N,eta_opt,value_exact,asymptotic,step_length,log10_tries"]
            for n in ns:
                lines.append(
                    f"{n},{theory.optimal_eta(n)!r},{theory.expected_phi1_at_opt(n)!r},"
                    f"{theory.expected_phi1_asymptote(n)!r},{theory.expected_step_length(n)!r},"
                    f"{theory.random_search_log10_tries(theory.expected_phi1_at_opt(n))!r}"
                )
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")

        _atomic_write(os.path.join(outdir, "opt_table.csv"), write_table)
        wrote["opt_curve"] = "opt_curve.csv"
        wrote["opt_table"] = "opt_table.csv"

    _write_sidecar(
        outdir,
        "theory",
        {
            "N": N,
            "etas": etas,
            "pdf": bool(args.pdf),
            "opt_curve": args.opt_curve,
            "seed": args.seed,
            "files": wrote,
        },
    )
    print(f"wrote {len(wrote) + 1} files to {outdir}")
    return 0


def cmd_descent(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    if args.profile == "extended":
        N = args.N_single if args.N_single is not None else 500
        M = args.M if args.M is not None else 20000
        points = args.points if args.points is not None else 10000
        factors = EXTENDED_ETA_FACTORS
    else:
        N = args.N_single if args.N_single is not None else 100
        M = args.M if args.M is not None else 4000
        points = args.points if args.points is not None else 2000
        factors = DESK_ETA_FACTORS
    if M <= N:
        raise ValueError(f"M must exceed N (got M={M}, N={N})")
    if args.eta_mode == "scaled":
        etas = [args.X / math.sqrt(N)]
    elif args.etas is not None:
        etas = _parse_eta_tokens(args.etas, N)
    else:
        eta_opt = theory.optimal_eta(N)
        etas = [f * eta_opt for f in factors]

    reports = descent.moment_sweep(
        etas, N, M, points, args.seed, box=args.box, mode=args.mode
    )
    _atomic_write(
        os.path.join(outdir, "moments.csv"),
        lambda p: descent.write_moment_csv(p, reports),
    )

    ks_info = None
    if args.ecdf:
        ecdf_eta = args.ecdf_eta if args.ecdf_eta is not None else 0.1 * theory.optimal_eta(N)
        report = descent.ecdf_experiment(
            N, ecdf_eta, points, args.seed + 1, M=M, box=args.box
        )
        _atomic_write(
            os.path.join(outdir, "ecdf_phi1.csv"),
            lambda p: descent.write_sample_csv(p, report.phi1),
        )
        ks_info = {
            "eta": ecdf_eta,
            "statistic": report.statistic,
            "ref_mean": report.ref_mean,
            "ref_std": report.ref_std,
        }

    _write_sidecar(
        outdir,
        "descent",
        {
            "N": N,
            "M": M,
            "points": points,
            "etas": etas,
            "box": args.box,
            "mode": args.mode,
            "seed": args.seed,
            "profile": args.profile,
            "ks": ks_info,
        },
    )

    violations = [r for r in reports if not r.within_band]
    for r in violations:
        print(
            f"band violation at eta={r.eta:g}: mean {r.sample_mean:.5f} vs "
            f"{r.theory_mean:.5f} (se {r.se_mean:.2g}), var {r.sample_var:.5f} vs "
            f"{r.theory_var:.5f} (se {r.se_var:.2g})",
            file=sys.stderr,
        )
    print(f"wrote moments.csv ({len(reports)} rows) to {outdir}")
    return 1 if violations else 0


def cmd_euler(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    ns = _parse_int_list(args.N_list)
    summary_rows = []
    for n in ns:
        if args.u_range == "auto":
            edge = math.sqrt(n) + 15.0
            grid = np.linspace(-edge, edge, args.u_points)
        else:
            grid = _parse_grid(args.u_range)
        chi = excursion.euler_curve(n, grid)

        def write_curve(p, grid=grid, chi=chi):
            lines = ["u,expected_chi"]
            for u, c in zip(grid, chi):
                lines.append(f"{float(u)!r},{float(c)!r}")
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")

        _atomic_write(os.path.join(outdir, f"euler_N{n}.csv"), write_curve)
        found = excursion.expected_min(n)
        gd_value = theory.expected_phi1_at_opt(n)
        summary_rows.append(
            (n, found.u_star, found.asymptotic, gd_value, abs(found.u_star) / abs(gd_value))
        )

    def write_summary(p):
        lines = ["N,u_star,asymptotic,gd_value,ratio"]
        for n, u_star, asym, gd, ratio in summary_rows:
            lines.append(f"{n},{u_star!r},{asym!r},{gd!r},{ratio!r}")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    _atomic_write(os.path.join(outdir, "euler_summary.csv"), write_summary)
    _write_sidecar(
        outdir,
        "euler",
        {"N_list": ns, "u_range": args.u_range, "u_points": args.u_points, "seed": args.seed},
    )
    print(f"wrote {len(ns)} curve files and euler_summary.csv to {outdir}")
    return 0


def _train_and_emit(args, outdir, config, train_set, test_set, extra):
    clf = classifier.train(config, train_set, test_set)
    _atomic_write(
        os.path.join(outdir, "loss.csv"),
        lambda p: classifier.write_loss_csv(p, clf.batch_history),
    )
    _atomic_write(
        os.path.join(outdir, "accuracy.csv"),
        lambda p: classifier.write_accuracy_csv(p, clf.accuracy_history),
    )
    if args.save_state:
        clf.save_state(
            os.path.join(outdir, "state.npz"), os.path.join(outdir, "field.grfs")
        )
    final_acc = clf.accuracy_history[-1][1]
    resolved = {
        "n_params": config.n_params,
        "n_inputs": config.n_inputs,
        "M": config.M,
        "eta": config.eta,
        "batch_size": config.batch_size,
        "epochs": config.epochs,
        "seed": config.seed,
        "final_accuracy": final_acc,
        **extra,
    }
    return clf, final_acc, resolved


def cmd_classify_sine(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    train_raw, test_raw = datasets.gen_sine(
        n_train=args.train_size,
        n_test=args.test_size,
        seed=args.seed,
        amplitude=args.amplitude,
        frequency=args.frequency,
        phase=args.phase,
    )
    if args.shuffled_control:
        train_raw = datasets.shuffle_labels(train_raw, args.seed + 1)
    train_set, test_set = datasets.normalize(train_raw, test_raw)
    config = classifier.ClassifierConfig(
        n_params=args.NP,
        n_inputs=2,
        M=args.M,
        eta=args.eta,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    if args.sweep is not None:
        etas = _parse_eta_tokens(args.sweep, args.NP + 2)
        results = classifier.lr_sweep(config, etas, train_set, test_set)

        def write_sweep(p):
            lines = ["eta,test_accuracy"]
            for eta, acc in results:
                lines.append(f"{eta!r},{acc!r}")
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")

        _atomic_write(os.path.join(outdir, "sweep.csv"), write_sweep)
        crit = classifier.critical_eta(results)
        _write_sidecar(
            outdir,
            "classify-sine",
            {
                "mode": "sweep",
                "etas": [e for e, _ in results],
                "critical_eta": crit,
                "n_params": config.n_params,
                "M": config.M,
                "seed": args.seed,
            },
        )
        print(f"wrote sweep.csv ({len(results)} rows) to {outdir}")
        return 0
    _, final_acc, resolved = _train_and_emit(
        args,
        outdir,
        config,
        train_set,
        test_set,
        {
            "task": "sine",
            "train_size": args.train_size,
            "test_size": args.test_size,
            "shuffled_control": bool(args.shuffled_control),
            "amplitude": args.amplitude,
            "frequency": args.frequency,
            "phase": args.phase,
        },
    )
    _write_sidecar(outdir, "classify-sine", resolved)
    print(f"final test accuracy {final_acc:.4f}; wrote history to {outdir}")
    return 0


def cmd_classify_mnist(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    if args.profile == "extended":
        n_params = args.NP if args.NP is not None else 5000
        M = args.M
        epochs = args.epochs if args.epochs is not None else 10
        subset = args.train_subset
    else:
        n_params = args.NP if args.NP is not None else 500
        M = args.M if args.M is not None else 10000
        epochs = args.epochs if args.epochs is not None else 3
        subset = args.train_subset if args.train_subset is not None else 10000
    train_raw = datasets.load_mnist_dir(args.mnist_dir, "train")
    test_raw = datasets.load_mnist_dir(args.mnist_dir, "test")
    if subset is not None and subset < len(train_raw):
        train_raw = datasets.Dataset(
            inputs=train_raw.inputs[:subset], labels=train_raw.labels[:subset]
        )
    train_set, test_set = datasets.normalize(train_raw, test_raw)
    config = classifier.ClassifierConfig(
        n_params=n_params,
        n_inputs=train_set.dim,
        M=M,
        eta=args.eta,
        batch_size=args.batch_size,
        epochs=epochs,
        seed=args.seed,
    )
    _, final_acc, resolved = _train_and_emit(
        args,
        outdir,
        config,
        train_set,
        test_set,
        {
            "task": "mnist-parity",
            "mnist_dir": args.mnist_dir,
            "train_subset": subset,
            "profile": args.profile,
        },
    )
    _write_sidecar(outdir, "classify-mnist", resolved)
    print(f"final test accuracy {final_acc:.4f}; wrote history to {outdir}")
    return 0


def cmd_bench(args):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    kernels = backend.available_backends()
    results = {}
    for name, module in kernels.items():
        start = time.perf_counter()
        results[name] = module.run_fresh_ensemble(
            args.N_single, args.M, args.eta, args.points, args.seed, args.box
        )
        elapsed = time.perf_counter() - start
        print(
            f"{name}: {elapsed:.3f} s for {args.points} members "
            f"(N={args.N_single}, M={args.M})",
            file=sys.stderr,
        )

    def write_agreement(p):
        lines = ["backend,reference,max_abs_diff_phi0,max_abs_diff_phi1,max_abs_diff_grad_sq"]
        ref_name = "python"
        ref = results[ref_name]
        for name, res in sorted(results.items()):
            diffs = [float(np.max(np.abs(res[i] - ref[i]))) if len(res[i]) else 0.0 for i in range(3)]
            lines.append(f"{name},{ref_name},{diffs[0]!r},{diffs[1]!r},{diffs[2]!r}")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    _atomic_write(os.path.join(outdir, "bench_agreement.csv"), write_agreement)
    _write_sidecar(
        outdir,
        "bench",
        {
            "N": args.N_single,
            "M": args.M,
            "points": args.points,
            "eta": args.eta,
            "box": args.box,
            "seed": args.seed,
            "backends": sorted(kernels),
        },
    )
    print(f"wrote bench_agreement.csv to {outdir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grfdescent",
        description="Gradient-descent statistics on Gaussian random fields",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=DEFAULT_OUT, help="output directory")
        p.add_argument(
            "--seed",
            type=int,
            default=int(os.environ.get("GRF_SEED", "0")),
            help="master seed (default: GRF_SEED env var or 0)",
        )
        p.add_argument("--config", help="key = value file supplying defaults")

    p = sub.add_parser("theory", help="closed-form curves and PDF tables")
    common(p)
    p.add_argument("--N", dest="N_single", type=int, default=500)
    p.add_argument("--etas", default="0.5opt,opt,2opt", help="comma list; 'opt' multiples allowed")
    p.add_argument("--pdf", action="store_true", help="emit the post-step PDF table")
    p.add_argument("--phi1-grid", dest="phi1_grid", help="lo:hi:count grid for the PDF table")
    p.add_argument("--opt-curve", dest="opt_curve", help="N list/range for the optimum curve, e.g. 1..1000")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("descent", help="simulated ensembles vs closed forms")
    common(p)
    p.add_argument("--N", dest="N_single", type=int, default=None)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--etas", default=None, help="comma list; 'opt' multiples allowed")
    p.add_argument("--eta-mode", dest="eta_mode", choices=["list", "scaled"], default="list")
    p.add_argument("--X", type=float, default=None, help="rescaled rate for --eta-mode scaled")
    p.add_argument("--box", type=float, default=descent.DEFAULT_BOX)
    p.add_argument("--mode", choices=["fresh", "shared"], default="fresh")
    p.add_argument("--profile", choices=["desk", "extended"], default="desk")
    p.add_argument("--ecdf", action="store_true", help="also emit an ECDF sample file")
    p.add_argument("--ecdf-eta", dest="ecdf_eta", type=float, default=None)
    p.set_defaults(func=cmd_descent)

    p = sub.add_parser("euler", help="expected Euler characteristic curves")
    common(p)
    p.add_argument("--N", dest="N_list", default="100,250,500", help="comma list or a..b range")
    p.add_argument("--u-range", dest="u_range", default="auto", help="'auto' or lo:hi:count")
    p.add_argument("--u-points", dest="u_points", type=int, default=201)
    p.set_defaults(func=cmd_euler)

    p = sub.add_parser("classify", help="train the field classifier")
    csub = p.add_subparsers(dest="task", required=True)

    ps = csub.add_parser("sine", help="synthetic sine-separated task")
    common(ps)
    ps.add_argument("--NP", type=int, default=498, help="trainable parameter dimension")
    ps.add_argument("--M", type=int, default=20000)
    ps.add_argument("--eta", type=float, default=0.01)
    ps.add_argument("--batch-size", dest="batch_size", type=int, default=128)
    ps.add_argument("--epochs", type=int, default=10)
    ps.add_argument("--train-size", dest="train_size", type=int, default=6000)
    ps.add_argument("--test-size", dest="test_size", type=int, default=1000)
    ps.add_argument("--amplitude", type=float, default=1.0)
    ps.add_argument("--frequency", type=float, default=math.pi)
    ps.add_argument("--phase", type=float, default=0.0)
    ps.add_argument("--shuffled-control", dest="shuffled_control", action="store_true")
    ps.add_argument("--sweep", help="comma list of learning rates to sweep instead of one run")
    ps.add_argument("--save-state", dest="save_state", action="store_true")
    ps.set_defaults(func=cmd_classify_sine)

    pm = csub.add_parser("mnist", help="digit parity from IDX files")
    common(pm)
    pm.add_argument("--mnist-dir", dest="mnist_dir", required=True)
    pm.add_argument("--NP", type=int, default=None)
    pm.add_argument("--M", type=int, default=None)
    pm.add_argument("--eta", type=float, default=0.01)
    pm.add_argument("--batch-size", dest="batch_size", type=int, default=128)
    pm.add_argument("--epochs", type=int, default=None)
    pm.add_argument("--train-subset", dest="train_subset", type=int, default=None)
    pm.add_argument("--profile", choices=["desk", "extended"], default="desk")
    pm.add_argument("--save-state", dest="save_state", action="store_true")
    pm.set_defaults(func=cmd_classify_mnist)

    p = sub.add_parser("bench", help="compare ensemble kernels")
    common(p)
    p.add_argument("--N", dest="N_single", type=int, default=50)
    p.add_argument("--M", type=int, default=2000)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--box", type=float, default=descent.DEFAULT_BOX)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _load_config_defaults(parser, argv)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if getattr(args, "eta_mode", None) == "scaled" and args.X is None:
        parser.error("--eta-mode scaled requires --X")
    try:
        return args.func(args)
    except (PrecisionLossError, SnapshotFormatError, IdxFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
