"""
State-space sequence layers: time-invariant SSM forms and the selective scan.
"""
from matir.ssm.core import (
    DiscreteSsm,
    SsmKernel,
    SsmParams,
    discretize,
    expm_oracle,
    kernel,
    scan_convolutional,
    scan_recurrent,
    spectral_radius,
)
from matir.ssm.selective import SelectiveSsm, selective_scan

__all__ = [
    "DiscreteSsm",
    "SsmKernel",
    "SsmParams",
    "discretize",
    "expm_oracle",
    "kernel",
    "scan_convolutional",
    "scan_recurrent",
    "spectral_radius",
    "SelectiveSsm",
    "selective_scan",
]
