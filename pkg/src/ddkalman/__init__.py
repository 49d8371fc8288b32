"""Domain-decomposed Kalman filtering with a shallow-water testbed."""

from .ddkf import (
    DdkfProblem,
    LocalFilterState,
    MultiDdkfProblem,
    coupling_vectors,
    ddkf_correct,
    ddkf_gains,
    ddkf_predict,
    ddkf_step,
    merge_multi,
    merge_overlap,
    multi_ddkf_step,
    run_windows,
)
from .decomp import (
    BlockModel,
    MultiDecomposition,
    SpaceDecomposition,
    TimeDecomposition,
    build_multi_decomposition,
    build_space_decomposition,
    build_time_decomposition,
    partition_model_matrix,
    partition_model_multi,
    partition_observation_matrix,
    partition_observation_multi,
    reassemble_model_matrix,
    two_window_layout,
)
from .errors import (
    ConfigurationError,
    DDKFError,
    DimensionError,
    InstabilityError,
    NotPositiveDefiniteError,
    ShapeError,
    StateError,
)
from .kernels import BACKEND
from .kf import GlobalFilterState, LinearGaussianSystem, kf_correct, kf_gain, kf_predict, kf_run, kf_step
from .matrixcore import IndexSet, extend, restrict_block, restrict_cols, restrict_rows, restrict_vec, spd_solve

__version__ = "0.1.0"
