"""Command-line driver.

Subcommands::

    dopinf generate --kind quadratic|diffusion --out data.snp [--seed N ...]
    dopinf train    --config run.cfg [--workers P] [--backend B] [--dry-run]
    dopinf probe    --config run.cfg --var 0 --index 120 [--var 0 --index 300]
    dopinf report   run_p1/timing.csv [run_p4/timing.csv ...]
    dopinf verify   --data data.snp [--worker-counts 1,2,4]

Exit status is 0 on success, 1 when a pipeline stage fails (or a
verification check fails) and 2 for usage errors, bad configuration and
missing input files.
"""

import argparse
import os
import sys

from .config import BACKENDS, PipelineConfig, load_config
from .data import partition_rows, read_header
from .errors import ConfigError, DOpInfError
from .opinf import n_quadratic
from .pipeline import probe_filename, reprobe, run_pipeline, \
    write_probe_outputs
from .postprocess import ProbeSet
from .report import report
from .synth import DiffusionDynamics, QuadraticDynamics, SynthSpec, \
    generate_diffusion, generate_quadratic
from .verify import verify_dataset

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dopinf",
        description="Distributed quadratic reduced models from snapshot data.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic snapshot file")
    g.add_argument("--kind", choices=("quadratic", "diffusion"),
                   default="quadratic")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nx", type=int, default=400)
    g.add_argument("--nt", type=int, default=200)
    g.add_argument("--nt-p", type=int, default=None)
    g.add_argument("--n-vars", type=int, default=1)
    g.add_argument("--r-true", type=int, default=3,
                   help="latent dimension (quadratic only)")
    g.add_argument("--conductivity", type=float, default=1e-2,
                   help="diffusion only")
    g.add_argument("--initial", choices=("smooth", "sine", "zero"),
                   default="smooth", help="diffusion only")

    def add_run_options(p):
        p.add_argument("--config")
        p.add_argument("--data", help="snapshot file (overrides the config)")
        p.add_argument("--output", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int)
        p.add_argument("--backend", choices=BACKENDS)
        p.add_argument("--energy", type=float)
        p.add_argument("--rank", type=int, help="prescribed reduced dimension")

    t = sub.add_parser("train", help="run the full pipeline")
    add_run_options(t)
    t.add_argument("--dry-run", action="store_true",
                   help="validate and print the plan without computing")

    pr = sub.add_parser("probe",
                        help="reconstruct probe series from a finished run")
    add_run_options(pr)
    pr.add_argument("--var", type=int, action="append", default=[])
    pr.add_argument("--index", type=int, action="append", default=[])
    pr.add_argument("--out-dir",
                    help="where to write the series (default <output>/reprobe)")

    r = sub.add_parser("report", help="timing breakdown and speedup")
    r.add_argument("csv", nargs="+", help="timing.csv files, baseline first")
    r.add_argument("--labels", help="comma-separated run labels")
    r.add_argument("--csv-out", help="also write the table as CSV")

    v = sub.add_parser("verify",
                       help="compare the distributed reduction with a serial SVD")
    add_run_options(v)
    v.add_argument("--worker-counts", default="1,2,4",
                   help="comma-separated worker counts (default 1,2,4)")
    return parser


def _resolve_config(args):
    config = load_config(args.config) if args.config else PipelineConfig()
    config = config.with_overrides(
        data=getattr(args, "data", None), output=getattr(args, "output", None),
        workers=getattr(args, "workers", None),
        backend=getattr(args, "backend", None),
        energy=getattr(args, "energy", None), rank=getattr(args, "rank", None))
    if config.data is None:
        raise _UsageError("no data file given (use --config or --data)")
    if not os.path.exists(config.data):
        raise _UsageError(f"data file not found: {config.data}")
    return config


def _cmd_generate(args):
    if args.kind == "quadratic":
        spec = SynthSpec(nx=args.nx, nt=args.nt, nt_p=args.nt_p,
                         n_vars=args.n_vars, r_true=args.r_true,
                         seed=args.seed, dynamics=QuadraticDynamics())
        generate_quadratic(spec, args.out)
        print(f"wrote {args.out} and {args.out}.truth.npz")
    else:
        spec = SynthSpec(nx=args.nx, nt=args.nt, nt_p=args.nt_p,
                         n_vars=args.n_vars, seed=args.seed,
                         dynamics=DiffusionDynamics(
                             conductivity=args.conductivity,
                             initial=args.initial))
        generate_diffusion(spec, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _dry_run(config):
    header = read_header(config.data)
    config.probes.validate(header.n_vars, header.nx)
    plan = partition_rows(header.nx, config.workers)
    sizes = [header.n_vars * (b - a) for a, b in plan.ranges]
    n_pairs = config.b1_num * config.b2_num
    print(f"data: {config.data} (n_vars={header.n_vars}, nx={header.nx}, "
          f"nt={header.nt})")
    print(f"backend: {config.backend}, workers: {config.workers}")
    print(f"partition rows per rank: {', '.join(map(str, sizes))}")
    print(f"grid: {config.b1_num} x {config.b2_num} = {n_pairs} pairs")
    if config.rank is not None:
        r = int(config.rank)
        print(f"r = {r}: d = {r + n_quadratic(r) + 1}")
    else:
        print(f"r chosen at energy {config.energy}: d = r + r(r+1)/2 + 1")
    print(f"K = {header.nt - 1}")
    nt_p = header.nt if config.nt_p is None else config.nt_p
    print(f"trial horizon nt_p = {nt_p}")
    if nt_p < header.nt:
        raise _UsageError(f"nt_p={nt_p} is shorter than nt={header.nt}")
    print(f"output: {config.output or '(none)'}; nothing written (dry run)")
    return EXIT_OK


def _cmd_train(args):
    config = _resolve_config(args)
    if args.dry_run:
        return _dry_run(config)
    results = run_pipeline(config)
    res = results[0]
    if res.rank != 0:
        return EXIT_OK
    oc = res.outcome
    print(f"r = {res.r}, beta1 = {oc.pair_opt.beta1:.6g}, "
          f"beta2 = {oc.pair_opt.beta2:.6g}, train_err = {oc.train_err:.6e} "
          f"(rank {oc.owner_rank})")
    if config.output:
        print(f"artifacts written to {config.output}")
    return EXIT_OK


def _cmd_probe(args):
    config = _resolve_config(args)
    if config.output is None or not os.path.isdir(config.output):
        raise _UsageError(f"run directory not found: {config.output}")
    if len(args.var) != len(args.index):
        raise _UsageError("--var and --index must be given the same number "
                          "of times")
    probes = ProbeSet(tuple(zip(args.var, args.index))) if args.var \
        else config.probes
    if not len(probes):
        raise _UsageError("no probes given")
    series = reprobe(config.output, config.data, probes)
    out_dir = args.out_dir or os.path.join(config.output, "reprobe")
    write_probe_outputs(out_dir, series)
    for sv in series:
        print(f"probe {sv.position}: var {sv.var}, index {sv.index}, "
              f"{sv.values.size} steps -> "
              f"{os.path.join(out_dir, probe_filename(sv.position, sv.var, sv.index))}")
    return EXIT_OK


def _cmd_report(args):
    for path in args.csv:
        if not os.path.exists(path):
            raise _UsageError(f"timing file not found: {path}")
    labels = args.labels.split(",") if args.labels else None
    if labels is not None and len(labels) != len(args.csv):
        raise _UsageError("--labels needs one label per file")
    text, csv_text = report(args.csv, labels)
    sys.stdout.write(text)
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8") as f:
            f.write(csv_text)
    return EXIT_OK


def _cmd_verify(args):
    config = _resolve_config(args)
    try:
        counts = tuple(int(w) for w in args.worker_counts.split(","))
    except ValueError:
        raise _UsageError(f"bad --worker-counts {args.worker_counts!r}") from None
    checks = verify_dataset(config.data, counts, config.energy, config.rank,
                            config.scaling)
    for check in checks:
        print(check.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


_COMMANDS = {"generate": _cmd_generate, "train": _cmd_train,
             "probe": _cmd_probe, "report": _cmd_report,
             "verify": _cmd_verify}


def _abort_mpi():
    mpi = sys.modules.get("mpi4py.MPI")
    if mpi is not None and mpi.Is_initialized() and mpi.COMM_WORLD.Get_size() > 1:
        mpi.COMM_WORLD.Abort(EXIT_FAILURE)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError, FileNotFoundError) as exc:
        msg = exc.filename if isinstance(exc, FileNotFoundError) \
            and exc.filename else exc
        print(f"dopinf: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (DOpInfError, ValueError) as exc:
        rank = getattr(exc, "rank", None)
        mpi = sys.modules.get("mpi4py.MPI")
        if rank is None and mpi is not None and mpi.Is_initialized():
            rank = mpi.COMM_WORLD.Get_rank()
        tag = f"[rank {rank}] " if rank is not None else ""
        print(f"dopinf: {tag}{type(exc).__name__}: {exc}", file=sys.stderr)
        _abort_mpi()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
