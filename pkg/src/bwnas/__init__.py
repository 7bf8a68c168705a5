"""Quantization-aware block-wise NAS: LUT population, Pareto pruning and
exact constrained search over per-block (subnet, bitwidth) choices."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BwnasError,
    DegenerateTargetError,
    IncompatibleError,
    InfeasibleError,
    LutFormatError,
    MissingMeasurementError,
    OracleCapError,
    ShapeError,
    SubnetRangeError,
    ValidationError,
)
from .space import (  # noqa: E402
    BlockSpec,
    OpChoice,
    SearchSpace,
    SubnetId,
    decode_subnet,
    default_space,
    encode_subnet,
    enumerate_block_subnets,
)
from .quant import QuantMenu, QuantScheme, WeightTensor, channel_minmax, fake_quantize, quantize_block_weights  # noqa: E402
from .nsr import nsr_loss  # noqa: E402
from .synthnet import (  # noqa: E402
    fit_projection,
    forward_block,
    make_calibration_set,
    make_student_block,
    make_teacher,
)
from .lut import (  # noqa: E402
    BlockLut,
    LutEntry,
    LutOptions,
    SyntheticLatency,
    TableLatency,
    build_luts,
    latency_estimate,
    model_size_bits,
    read_luts,
    write_luts,
)
from .pareto import ParetoFront, pareto_front, prune_luts, read_fronts, write_fronts  # noqa: E402
from .search import (  # noqa: E402
    SearchConstraints,
    SearchResult,
    branch_and_bound_search,
    brute_force_search,
    concat_block_candidates,
    sweep,
    unconstrained_best,
)
