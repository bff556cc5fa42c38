"""Training objective and evaluation metrics."""
from .losses import LossTerms, bce_loss, bce_with_logits, iou_loss, joint_loss
from .metrics import MetricsReport, aggregate, evaluate_pair, f_beta, f_measure_curve, mae, s_measure

__all__ = ["LossTerms", "MetricsReport", "aggregate", "bce_loss", "bce_with_logits", "evaluate_pair", "f_beta",
           "f_measure_curve", "iou_loss", "joint_loss", "mae", "s_measure"]
