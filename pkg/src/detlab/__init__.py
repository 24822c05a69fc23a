"""detlab: NMS-free detection assignment analytics and block cost models.

Library surface:

* :mod:`detlab.geometry` -- boxes, IoU, spatial prior;
* :mod:`detlab.assignment` -- consistent dual label assignment and
  supervision-gap analytics;
* :mod:`detlab.postprocess` -- greedy NMS, NMS-free selection, benchmark;
* :mod:`detlab.tensor_ops` / :mod:`detlab.blocks` / :mod:`detlab.costs`
  -- reference block forwards with exact MAC/parameter accounting;
* :mod:`detlab.rank_design` -- numerical ranks and rank-guided allocation;
* :mod:`detlab.synth` / :mod:`detlab.dataio` / :mod:`detlab.cli` --
  datasets, configuration, and the command-line surface.
"""

from ._kernels import BACKEND, HAVE_EXTENSION
from .archive import read_archive, write_archive
from .assignment import (
    AssignmentResult,
    GapReport,
    GroundTruthInstance,
    GTAssignment,
    MetricParams,
    Prediction,
    alignment_frequency,
    assign_one_to_many,
    assign_one_to_one,
    consistency_ratio,
    gap_oracle,
    matching_metric,
    supervision_gap,
    target_vector,
)
from .blocks import (
    BLOCK_KINDS,
    BlockSpec,
    block_weight_shapes,
    forward_block,
    init_block_weights,
    mhsa_forward,
    psa_attention_dims,
)
from .costs import CostReport, conv_cost, count_cost
from .dataio import Dataset, ImageSample, RunConfig, dataset_to_dict, load_config, parse_dataset
from .errors import (
    ConfigError,
    DetlabError,
    EmptyPredictionsError,
    InternalError,
    LengthMismatchError,
    MissingMatchError,
    MissingWeightError,
    OddChannelsError,
    ParseError,
    ShapeMismatchError,
    ZeroMatrixError,
)
from .geometry import AnchorPoint, BoundingBox, iou, spatial_prior
from .postprocess import BenchReport, Detection, bench_postprocess, decode_predictions, nms, nms_free_select
from .rank_design import (
    AllocationStep,
    AllocationTrace,
    CommandEvaluator,
    RankReport,
    StageRank,
    TableEvaluator,
    numerical_rank,
    rank_guided_allocate,
    singular_values,
    stage_ranks,
)
from .synth import generate_synthetic
from .tensor_ops import ConvSpec, MacCounter, bn_fold, conv2d_ref, count_macs, matmul, reparam_fuse_lk

__version__ = "0.1.0"
