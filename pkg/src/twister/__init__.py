"""Selective state-space scans and text-conditioned fusion for referring segmentation."""

from .fusion import FusionVariant
from .geometry import ScanDirection, ScanOrder
from .model import ModelConfig, TwisterModel, segment
from .ssm import DiscreteSsm, SelectiveSSM, SsmParams, discretize_zoh, scan_parallel, scan_sequential

__all__ = [
    "DiscreteSsm",
    "FusionVariant",
    "ModelConfig",
    "ScanDirection",
    "ScanOrder",
    "SelectiveSSM",
    "SsmParams",
    "TwisterModel",
    "discretize_zoh",
    "scan_parallel",
    "scan_sequential",
    "segment",
]
