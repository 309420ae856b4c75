"""Exception hierarchy shared by all pipeline stages."""


class DOpInfError(Exception):
    """Base class for every error raised by this package."""


class CollectiveError(DOpInfError):
    """A collective call was entered inconsistently (shape mismatch, timeout,
    or a peer rank failed)."""


class PartitionError(DOpInfError, ValueError):
    pass


class FormatError(DOpInfError):
    """Snapshot container is malformed or truncated."""


class DegenerateVariableError(DOpInfError):
    """A state variable is constant in time, so it has no scaling parameter."""

    def __init__(self, variable, name=None):
        self.variable = variable
        label = f"{variable} ({name})" if name else f"{variable}"
        super().__init__(
            f"variable {label} has zero maximum absolute value after "
            "centering; cannot scale a constant-in-time variable")


class NotPSDError(DOpInfError):
    """Gram matrix has an eigenvalue too negative to be round-off."""


class RankDeficiencyError(DOpInfError):
    """Requested reduced dimension exceeds the numerical rank of the data."""


class OpInfSolveError(DOpInfError):
    """Regularized normal equations could not be solved."""


class NoAdmissiblePairError(DOpInfError):
    """Every regularization candidate diverged or violated the growth bound."""

    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        lines = ["no admissible regularization pair"]
        for d in diagnostics:
            lines.append(
                f"  rank {d['rank']}: {d['n_pairs']} pairs, "
                f"{d['non_finite']} non-finite, {d['solve_failed']} solve "
                f"failures, {d['growth_violations']} growth violations "
                f"(min growth {d['min_growth']:.4g})")
        super().__init__("\n".join(lines))


class SynthesisError(DOpInfError):
    """Synthetic dataset specification cannot produce usable data."""


class ConfigError(DOpInfError, ValueError):
    pass
