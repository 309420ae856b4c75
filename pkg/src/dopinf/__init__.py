"""Distributed Operator Inference: quadratic reduced models learned from
row-partitioned snapshot data."""

from .comm import (Communicator, InProcessComm, MPIComm, ReduceOp, SerialComm,
                   run_inprocess)
from .config import PipelineConfig, load_config, parse_config
from .data import (LocalBlock, PartitionPlan, SnapshotHeader, load_block,
                   partition_rows, read_block, read_header, write_snapshots)
from .errors import (CollectiveError, ConfigError, DegenerateVariableError,
                     DOpInfError, FormatError, NoAdmissiblePairError,
                     NotPSDError, OpInfSolveError, PartitionError,
                     RankDeficiencyError, SynthesisError)
from .opinf import (DiscreteQuadraticOpInf, ReducedOperators, RegPair,
                    assemble_data, build_regularizer, quad_nonredundant,
                    solve_opinf)
from .pipeline import run_pipeline, run_rank
from .pod import GramPOD, eig_sym_desc, reduced_map, select_rank
from .postprocess import ProbeSet, reconstruct_field, reconstruct_probes
from .rom_search import (OpInfGridSearch, SearchConfig, grid_search,
                         growth_ratio, integrate, training_error)
from .synth import SynthSpec, generate_diffusion, generate_quadratic
from .transform import SnapshotScaler, fit_transform_block

__version__ = "0.1.0"
