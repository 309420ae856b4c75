"""End-to-end training run: load, transform, reduce, search, reconstruct.

``run_rank`` is the per-rank program and must be called collectively;
``run_pipeline`` launches it under the configured backend. Every stage is
preceded by a barrier so that its time is not inflated by waiting for
slower ranks in the previous stage.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .artifacts import load_blob, read_record, save_blob, save_vector, \
    write_record
from .comm import MPIComm, SerialComm, run_inprocess
from .data import PartitionPlan, load_block, read_header, read_rows
from .opinf import n_quadratic
from .pod import eig_sym_desc, global_gram, local_gram, project, reduced_map, \
    retained_energy, select_rank
from .postprocess import ProbeSeries, basis_rows, lift, reconstruct_field, reconstruct_probes, \
    write_local_field
from .rom_search import grid_search
from .transform import fit_transform_block

__all__ = ["STAGES", "RankResult", "run_rank", "run_pipeline",
           "probe_filename", "field_filename", "reprobe",
           "write_probe_outputs"]

STAGES = ("load", "transform", "gram+reduce", "eig+project", "search",
          "postprocess")


@dataclass
class RankResult:
    """Everything one rank knows at the end of a run."""

    rank: int
    size: int
    header: object
    plan: object
    params: object
    gram: np.ndarray
    eigenvalues: np.ndarray
    r: int
    Tr: np.ndarray
    Qhat: np.ndarray
    outcome: object
    probes: list
    local_field: np.ndarray = None
    timings: dict = field(default_factory=dict)


class _Stopwatch:
    def __init__(self, comm):
        self.comm = comm
        self.timings = {}

    def stage(self, name):
        return _Stage(self, name)


class _Stage:
    def __init__(self, watch, name):
        self.watch = watch
        self.name = name

    def __enter__(self):
        self.watch.comm.barrier()
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            self.watch.timings[self.name] = time.perf_counter() - self.t0
        return False


def probe_filename(position, var, index):
    return f"probe_{position}_var{var}_idx{index}.bin"


def field_filename(rank):
    return f"field_rank{rank}.snp"


def run_rank(comm, config, write=True):
    """Run every stage on this rank (collective).

    Parameters
    ----------
    comm : Communicator
    config : PipelineConfig
    write : bool
        Write artifacts to ``config.output`` (ignored when it is None).

    Returns
    -------
    RankResult
    """
    comm = comm or SerialComm()
    watch = _Stopwatch(comm)

    with watch.stage("load"):
        header, plan, block = load_block(config.data, comm)
    probes = config.probes.validate(header.n_vars, header.nx)

    with watch.stage("transform"):
        params = fit_transform_block(block, comm, config.scaling,
                                     header.var_names)

    with watch.stage("gram+reduce"):
        D = global_gram(local_gram(block.values), comm)

    with watch.stage("eig+project"):
        spectrum = eig_sym_desc(D)
        r = int(config.rank) if config.rank is not None \
            else select_rank(spectrum.eigenvalues, config.energy)
        Tr = reduced_map(spectrum, r)
        Qhat = project(Tr, D)

    with watch.stage("search"):
        outcome = grid_search(Qhat, config.search_config(), comm)

    with watch.stage("postprocess"):
        series = reconstruct_probes(block, Tr, outcome.trajectory, probes,
                                    params)
        local_field = reconstruct_field(block, Tr, outcome.trajectory, params) \
            if config.save_field else None

    result = RankResult(rank=comm.rank, size=comm.size, header=header,
                        plan=plan, params=params, gram=D,
                        eigenvalues=spectrum.eigenvalues, r=r, Tr=Tr,
                        Qhat=Qhat, outcome=outcome, probes=series,
                        local_field=local_field, timings=watch.timings)
    all_timings = comm.allgather(watch.timings)
    if write and config.output is not None:
        _write_artifacts(result, config, all_timings)
    comm.barrier()
    return result


def _write_artifacts(res, config, all_timings):
    out = config.output
    os.makedirs(out, exist_ok=True)
    rank = res.rank
    start, end = res.plan.ranges[rank]

    # Per-rank outputs.
    means = res.params.local_means.reshape(res.header.n_vars, end - start)
    save_blob(os.path.join(out, f"means_rank{rank}.blob"), means)
    for s in res.probes:
        save_vector(os.path.join(out, probe_filename(s.position, s.var,
                                                     s.index)), s.values)
    if res.local_field is not None:
        write_local_field(os.path.join(out, field_filename(rank)), res.local_field,
                          res.header.var_names)
    if rank != 0:
        return

    oc = res.outcome
    ops = oc.operators
    for name, arr in (("A", ops.A), ("F", ops.F), ("c", ops.c), ("Tr", res.Tr),
                      ("trajectory", oc.trajectory), ("Qhat", res.Qhat),
                      ("eigenvalues", res.eigenvalues)):
        save_blob(os.path.join(out, f"{name}.blob"), arr)
    if res.params.scaling_enabled:
        save_blob(os.path.join(out, "scales.blob"), res.params.scales)

    write_record(os.path.join(out, "result.txt"), {
        "beta1": oc.pair_opt.beta1,
        "beta2": oc.pair_opt.beta2,
        "r": res.r,
        "train_err": oc.train_err,
        "retained_energy": retained_energy(res.eigenvalues, res.r),
        "pair_index": oc.pair_index,
        "owner_rank": oc.owner_rank,
        "growth": oc.growth,
        "nt": res.header.nt,
        "nt_p": oc.trajectory.shape[0],
        "n_vars": res.header.n_vars,
        "nx": res.header.nx,
        "workers": res.size,
        "scaling": "on" if res.params.scaling_enabled else "off",
        "d": res.r + n_quadratic(res.r) + 1,
    })
    with open(os.path.join(out, "partition.txt"), "w", encoding="utf-8") as f:
        f.write("rank,start,end\n")
        for i, (a, b) in enumerate(res.plan.ranges):
            f.write(f"{i},{a},{b}\n")
    _write_probe_manifest(out, config.probes, res.plan)
    if config.save_field:
        with open(os.path.join(out, "fields.txt"), "w", encoding="utf-8") as f:
            f.write("rank,start,end,file\n")
            for i, (a, b) in enumerate(res.plan.ranges):
                f.write(f"{i},{a},{b},{field_filename(i)}\n")
    with open(os.path.join(out, "timing.csv"), "w", encoding="utf-8") as f:
        f.write("rank,stage,seconds\n")
        for i, timings in enumerate(all_timings):
            for stage in STAGES:
                f.write(f"{i},{stage},{timings[stage]!r}\n")
        f.write(f"{oc.owner_rank},rom,{oc.rom_seconds!r}\n")


def _write_probe_manifest(out, probes, plan=None):
    with open(os.path.join(out, "probes.txt"), "w", encoding="utf-8") as f:
        f.write("position,var,index,owner_rank,file\n")
        for position, (j, g) in enumerate(probes):
            owner = "" if plan is None else plan.owner(g)
            f.write(f"{position},{j},{g},{owner},"
                    f"{probe_filename(position, j, g)}\n")


def write_probe_outputs(out, series):
    """One little-endian float64 file per probe series plus ``probes.txt``."""
    os.makedirs(out, exist_ok=True)
    for s in series:
        save_vector(os.path.join(out, probe_filename(s.position, s.var,
                                                     s.index)), s.values)
    _write_probe_manifest(out, [(s.var, s.index) for s in series])


def run_pipeline(config, write=True):
    """Run the pipeline under ``config.backend``.

    Returns
    -------
    list of RankResult
        One entry per rank for the in-process backend; only this process's
        entry under MPI.
    """
    if config.data is None:
        raise ValueError("config has no data path")
    if not os.path.exists(config.data):
        raise FileNotFoundError(config.data)
    if config.backend == "mpi":
        return [run_rank(MPIComm(), config, write)]
    return run_inprocess(run_rank, config.workers, config, write,
                         timeout=config.timeout)


def _read_partition(out):
    with open(os.path.join(out, "partition.txt"), encoding="utf-8") as f:
        next(f)
        return [tuple(int(v) for v in line.split(",")[1:])
                for line in f if line.strip()]


def reprobe(output, data, probes):
    """Reconstruct probe series from saved artifacts without re-training.

    Parameters
    ----------
    output : str
        Directory written by a training run.
    data : str
        The snapshot file the run was trained on.
    probes : ProbeSet

    Returns
    -------
    list of ProbeSeries
        In probe-set order.
    """
    record = read_record(os.path.join(output, "result.txt"))
    header = read_header(data)
    probes.validate(header.n_vars, header.nx)
    if int(record["nt"]) != header.nt or int(record["nx"]) != header.nx:
        raise ValueError(f"{data} does not match the run in {output}")
    Tr = load_blob(os.path.join(output, "Tr.blob"))
    traj = load_blob(os.path.join(output, "trajectory.blob"))
    scales = load_blob(os.path.join(output, "scales.blob"))[0] \
        if record.get("scaling") == "on" else None
    ranges = _read_partition(output)
    plan = PartitionPlan(ranges)
    means = {}
    out = []
    for position, (j, g) in enumerate(probes):
        owner = plan.owner(g)
        if owner not in means:
            means[owner] = load_blob(os.path.join(output,
                                                  f"means_rank{owner}.blob"))
        mean = means[owner][j, g - ranges[owner][0]]
        row = read_rows(data, header, j, g, g + 1) - mean
        if scales is not None:
            row = row / scales[j]
        series = lift(basis_rows(row, Tr), traj)
        series = series * (1.0 if scales is None else scales[j]) + mean
        out.append(ProbeSeries(position, j, g, series[0]))
    return out
