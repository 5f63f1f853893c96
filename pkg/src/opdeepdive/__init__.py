"""End-to-end monocular trajectory planning: model, loss, metrics, data, training."""

from .calib import (CameraExtrinsics, CameraIntrinsics, CalibrationError,
                    VirtualCameraSpec, rotation_homography, stack_frames, warp_frame)
from .loss import LossBreakdown, LossConfig, mtp_loss, mtp_loss_batch, select_mode
from .metrics import (ComfortReport, ImitationReport, comfort_metrics,
                      imitation_metrics, pointwise_errors)
from .model import (ModelConfig, MultimodalPrediction, PlannerModel, build_model,
                    decode_output, select_best)
from .trajectory import (AnchorSet, EgoTrajectory, InsufficientHorizon, PoseLog,
                         comma_anchor_set, global_to_ego, ground_truth_trajectory,
                         uniform_anchor_set)

__version__ = "0.1.0"
