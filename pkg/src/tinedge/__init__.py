"""tinedge: compact traditional-inspired CNN edge detectors.

From-scratch tensor math with reverse-mode autodiff, the TIN1/TIN2
network graphs, balanced cross-entropy training, multi-scale inference,
NMS thinning, and ODS/OIS boundary evaluation.
"""

from .tensor import Tensor, backward, relu, sigmoid
from .kernels import DirectionalKernel, directional_bank, sobel_detect
from .model import (
    EnrichmentSpec,
    NetworkGraph,
    build_tin1,
    build_tin2,
    forward,
    init_params,
    param_count,
)
from .loss import DegenerateLabelError, GroundTruth, LossConfig, class_weights, map_loss, total_loss
from .trainer import AugmentPlan, TrainConfig, TrainingLog, augment, lr_at, sgd_step, train
from .inference import predict, predict_multiscale
from .nms import estimate_orientation, nms_thin
from .evaluator import (
    EvalReport,
    PRPoint,
    evaluate_dataset,
    match_edges,
    match_oracle,
    ods_ois,
    pr_sweep,
)
from .dataio import (
    Manifest,
    load_checkpoint,
    load_gt,
    load_image,
    load_manifest,
    save_checkpoint,
    save_edge_map,
)

__version__ = "0.1.0"
