"""
Named numerical properties behind `matir verify`.
"""
from typing import Dict, Optional, Sequence

from matir.pipeline.report import report_header
from matir.verification.properties import (
    GRADIENT_MODEL,
    Measurement,
    PropertyResult,
    list_properties,
    register,
    run_properties,
)


def exit_code(results: Sequence[PropertyResult]) -> int:
    """0 all passed, 1 any property failed, 2 a property raised or nothing matched."""
    if not results or any(r.status == "ERROR" for r in results):
        return 2
    return 1 if any(r.status == "FAIL" for r in results) else 0


def verify_header(pattern: Optional[str]) -> Dict[str, str]:
    """Report header for a verify run; the config is the model the gradient suite checks."""
    return report_header(GRADIENT_MODEL, GRADIENT_MODEL.seed, seeds="fixed per property", filter=pattern or "(all)")


__all__ = [
    "Measurement",
    "PropertyResult",
    "exit_code",
    "list_properties",
    "register",
    "run_properties",
    "verify_header",
]
