"""
Image I/O, degradations, metrics, training and evaluation.
"""
from matir.pipeline.degrade import DegradationSpec, add_noise, bicubic_down, degrade, make_degradation
from matir.pipeline.evaluate import CSV_HEADER, EvaluationResult, ImageResult, evaluate, restore
from matir.pipeline.images import ImagePlane, list_images, read_image, write_image
from matir.pipeline.metrics import Metrics, psnr, ssim
from matir.pipeline.optim import Adam, MultiStepSchedule, default_milestones
from matir.pipeline.report import AblationReport, StepRecord, TrainingReport
from matir.pipeline.train import TrainSpec, dihedral, make_train_spec, run_ablation, train

__all__ = [
    "DegradationSpec",
    "add_noise",
    "bicubic_down",
    "degrade",
    "make_degradation",
    "CSV_HEADER",
    "EvaluationResult",
    "ImageResult",
    "evaluate",
    "restore",
    "ImagePlane",
    "list_images",
    "read_image",
    "write_image",
    "Metrics",
    "psnr",
    "ssim",
    "Adam",
    "MultiStepSchedule",
    "default_milestones",
    "AblationReport",
    "StepRecord",
    "TrainingReport",
    "TrainSpec",
    "dihedral",
    "make_train_spec",
    "run_ablation",
    "train",
]
