"""Timing breakdown of training runs.

A run's ``timing.csv`` has columns ``rank,stage,seconds``: one row per rank
and stage, plus a ``rom`` row giving the integration time of the winning
candidate on the rank that owns it. The headline time of a stage is its
maximum over ranks, except ``search`` and ``rom``, which are reported for
the winning rank.
"""

import csv
from dataclasses import dataclass, field

__all__ = ["TimingReport", "read_timing_csv", "report"]

_OWNER_STAGES = ("search", "rom")


@dataclass
class TimingReport:
    rows: list = field(default_factory=list)

    @property
    def stages(self):
        seen = []
        for _, stage, _ in self.rows:
            if stage not in seen:
                seen.append(stage)
        return seen

    @property
    def owner_rank(self):
        for rank, stage, _ in self.rows:
            if stage == "rom":
                return rank
        return None

    def seconds(self, stage):
        """Per-rank seconds of ``stage`` as a ``{rank: seconds}`` dict."""
        return {rank: sec for rank, s, sec in self.rows if s == stage}

    def headline(self, stage):
        per_rank = self.seconds(stage)
        if not per_rank:
            return None
        owner = self.owner_rank
        if stage in _OWNER_STAGES and owner in per_rank:
            return per_rank[owner]
        return max(per_rank.values())

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["rank", "stage", "seconds"])
            for rank, stage, sec in self.rows:
                w.writerow([rank, stage, repr(sec)])


def read_timing_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = {"rank", "stage", "seconds"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            sec = float(row["seconds"])
            if sec < 0:
                raise ValueError(f"{path}: negative time for {row['stage']}")
            rows.append((int(row["rank"]), row["stage"], sec))
    return TimingReport(rows)


def report(paths, labels=None):
    """Text and CSV summaries of one or more timing files.

    With several files the first is the baseline and each later file gets a
    ``speedup`` column ``t(baseline) / t(file)`` per stage. A stage missing
    from either file gets no speedup and a note instead.

    Returns
    -------
    text : str
    csv_text : str
    """
    reports = [read_timing_csv(p) for p in paths]
    labels = list(labels) if labels else [str(p) for p in paths]
    stages = []
    for rep in reports:
        stages += [s for s in rep.stages if s not in stages]

    header = ["stage"] + [f"seconds[{lab}]" for lab in labels]
    header += [f"speedup[{lab}]" for lab in labels[1:]]
    table, notes = [], []
    for stage in stages:
        times = [rep.headline(stage) for rep in reports]
        row = [stage] + ["" if t is None else f"{t:.6g}" for t in times]
        base = times[0]
        for lab, t in zip(labels[1:], times[1:]):
            if base is None or t is None:
                row.append("")
                where = labels[0] if base is None else lab
                notes.append(f"note: stage '{stage}' absent from {where}; "
                             "speedup omitted")
            elif t == 0:
                row.append("")
                notes.append(f"note: stage '{stage}' took 0 s in {lab}; "
                             "speedup omitted")
            else:
                row.append(f"{base / t:.4g}")
        table.append(row)

    csv_lines = [",".join(header)] + [",".join(r) for r in table]
    widths = [max(len(r[i]) for r in [header] + table)
              for i in range(len(header))]
    text_lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
                  for r in [header] + table]
    if len(reports) == 1 and reports[0].owner_rank is not None:
        text_lines.append(f"search and rom reported for winning rank "
                          f"{reports[0].owner_rank}")
    return "\n".join(text_lines + notes) + "\n", "\n".join(csv_lines) + "\n"
