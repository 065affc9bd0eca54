"""
Line-oriented training and ablation reports.

Training report layout:
    # key: value            header lines (config hash, seed, version, ...)
    step,loss,lr[,val_psnr]
    0,<val L1>,<lr>,<val psnr>   step 0 evaluates only, no update
    1,<loss>,<lr>
    ...
    # val_psnr_avg3: ...    footer: moving average of the last 3 validations
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import matir
from matir.model.config import MatIrConfig, config_hash
from matir.pipeline.metrics import Y_WEIGHTS

logger = logging.getLogger(__name__)

SMOOTHING_WINDOW = 3


def header_lines(header: Dict[str, str]) -> List[str]:
    return [f"# {k}: {v}" for k, v in header.items()]


def report_header(config: MatIrConfig, seed: int, **extra) -> "OrderedDict[str, str]":
    header: "OrderedDict[str, str]" = OrderedDict()
    header["config_hash"] = config_hash(config)
    header["seed"] = str(seed)
    header["version"] = matir.__version__
    header["task"] = config.task
    header["scale"] = str(config.scale)
    header["y_channel"] = "BT.601 full-range " + "/".join(f"{w:g}" for w in Y_WEIGHTS)
    for key, value in extra.items():
        header[key] = str(value)
    return header


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float
    val_psnr: Optional[float] = None

    def to_line(self) -> str:
        line = f"{self.step},{self.loss:.10g},{self.lr:.6g}"
        if self.val_psnr is not None:
            line += f",{self.val_psnr:.6f}"
        return line


@dataclass
class TrainingReport:
    """Per-step losses and periodic validation PSNR of one training run."""
    header: "OrderedDict[str, str]"
    records: List[StepRecord] = field(default_factory=list)

    def add(self, record: StepRecord) -> None:
        self.records.append(record)

    @property
    def validations(self) -> List[float]:
        return [r.val_psnr for r in self.records if r.val_psnr is not None]

    @property
    def final_val_psnr(self) -> Optional[float]:
        vals = self.validations
        return vals[-1] if vals else None

    @property
    def smoothed_val_psnr(self) -> Optional[float]:
        """Mean of the last three validation PSNRs."""
        vals = self.validations[-SMOOTHING_WINDOW:]
        return sum(vals) / len(vals) if vals else None

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.records if r.step > 0]

    def to_text(self) -> str:
        lines = header_lines(self.header)
        lines.append("step,loss,lr[,val_psnr]")
        lines.extend(r.to_line() for r in self.records)
        if self.final_val_psnr is not None:
            lines.append(f"# final_val_psnr: {self.final_val_psnr:.6f}")
            lines.append(f"# val_psnr_avg{SMOOTHING_WINDOW}: {self.smoothed_val_psnr:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


@dataclass
class AblationReport:
    """Paired full vs reduced runs under one seed and budget."""
    header: "OrderedDict[str, str]"
    full_params: int
    reduced_params: int
    full: TrainingReport
    reduced: TrainingReport
    label: str

    @property
    def delta(self) -> float:
        return (self.reduced.final_val_psnr or 0.0) - (self.full.final_val_psnr or 0.0)

    def rows(self) -> Dict[str, List[str]]:
        return OrderedDict([
            ("params", [str(self.full_params), str(self.reduced_params)]),
            ("final_val_psnr", [f"{self.full.final_val_psnr:.4f}", f"{self.reduced.final_val_psnr:.4f}"]),
            ("val_psnr_avg3", [f"{self.full.smoothed_val_psnr:.4f}", f"{self.reduced.smoothed_val_psnr:.4f}"]),
            ("final_loss", [
                f"{self.full.records[-1].loss:.6g}",
                f"{self.reduced.records[-1].loss:.6g}",
            ]),
        ])

    def to_text(self) -> str:
        lines = header_lines(self.header)
        lines.append(f"{'metric':<16} {'full':>14} {self.label:>14}")
        for name, (full, reduced) in self.rows().items():
            lines.append(f"{name:<16} {full:>14} {reduced:>14}")
        lines.append(f"{'delta_val_psnr':<16} {'':>14} {self.delta:>+14.4f}")
        return "\n".join(lines) + "\n"

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")
