"""
Folder evaluation: degrade -> restore -> PSNR/SSIM per image, with a baseline
column (bicubic upsample for SR, the degraded input for denoising).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from matir.errors import MatIrError
from matir.model.network import MatIrModel, pad_to_multiple
from matir.pipeline.degrade import DegradationSpec, degrade
from matir.pipeline.images import ImagePlane, list_images, read_image
from matir.pipeline.metrics import Metrics, measure
from matir.pipeline.report import header_lines, report_header
from matir.resample import resize_array
from matir.settings import get_settings
from matir.tensor.core import Tensor, no_grad

logger = logging.getLogger(__name__)

CSV_HEADER = "image,psnr_db,ssim"


def restore(model: MatIrModel, degraded: ImagePlane) -> ImagePlane:
    """Reflect-pad to a window multiple, run the model, crop back."""
    planes, (height, width) = pad_to_multiple(degraded.to_rgb().to_array(), model.config.window_size)
    with no_grad():
        out = model(Tensor(planes)).data
    s = model.config.scale
    return ImagePlane.from_array(out[:, :height * s, :width * s])


def baseline(degraded: ImagePlane, scale: int) -> ImagePlane:
    if scale == 1:
        return degraded.to_rgb()
    planes = degraded.to_rgb().to_array()
    return ImagePlane.from_array(resize_array(planes, degraded.height * scale, degraded.width * scale))


@dataclass(frozen=True)
class ImageResult:
    name: str
    restored: Metrics
    baseline: Metrics


@dataclass
class EvaluationResult:
    """Per-image metrics plus the number of files that were skipped."""
    results: List[ImageResult] = field(default_factory=list)
    skipped: int = 0
    header: Dict[str, str] = field(default_factory=OrderedDict)

    def mean(self) -> Optional[Metrics]:
        if not self.results:
            return None
        return Metrics(
            psnr=float(np.mean([r.restored.psnr for r in self.results])),
            ssim=float(np.mean([r.restored.ssim for r in self.results])),
        )

    def mean_baseline(self) -> Optional[Metrics]:
        if not self.results:
            return None
        return Metrics(
            psnr=float(np.mean([r.baseline.psnr for r in self.results])),
            ssim=float(np.mean([r.baseline.ssim for r in self.results])),
        )

    def to_csv(self) -> str:
        lines = header_lines(self.header) + [CSV_HEADER]
        lines.extend(f"{r.name},{r.restored.psnr:.6f},{r.restored.ssim:.6f}" for r in self.results)
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        head = f"{'image':<24} {'psnr_db':>9} {'ssim':>8} {'base_psnr':>10} {'base_ssim':>10} {'delta_db':>9}"
        lines = header_lines(self.header) + [head, "-" * len(head)]
        for r in self.results:
            lines.append(
                f"{r.name:<24} {r.restored.psnr:>9.3f} {r.restored.ssim:>8.4f} "
                f"{r.baseline.psnr:>10.3f} {r.baseline.ssim:>10.4f} {r.restored.psnr - r.baseline.psnr:>+9.3f}"
            )
        mean, base = self.mean(), self.mean_baseline()
        if mean is not None:
            lines.append("-" * len(head))
            lines.append(
                f"{'mean':<24} {mean.psnr:>9.3f} {mean.ssim:>8.4f} "
                f"{base.psnr:>10.3f} {base.ssim:>10.4f} {mean.psnr - base.psnr:>+9.3f}"
            )
        lines.append(f"images: {len(self.results)}  skipped: {self.skipped}")
        return "\n".join(lines) + "\n"


def _crop_to_scale(img: ImagePlane, scale: int) -> ImagePlane:
    height = img.height - img.height % scale
    width = img.width - img.width % scale
    return img.crop(0, 0, height, width) if (height, width) != (img.height, img.width) else img


def evaluate_image(model: MatIrModel, clean: ImagePlane, spec: DegradationSpec, name: str) -> ImageResult:
    scale = spec.scale if spec.kind == "bicubic" else 1
    clean = _crop_to_scale(clean.to_rgb(), scale)
    degraded = degrade(clean, spec)
    restored = restore(model, degraded)
    return ImageResult(name=name, restored=measure(restored, clean), baseline=measure(baseline(degraded, scale), clean))


def evaluate(
    model: MatIrModel,
    dataset: Union[str, Path],
    spec: DegradationSpec,
    csv_path: Optional[Union[str, Path]] = None,
) -> EvaluationResult:
    """
    Evaluate every PNG/PPM image of a folder; unreadable or too-small images
    are skipped with a warning and counted.
    """
    paths = list_images(dataset)

    def _one(item: Tuple[int, Path]) -> Optional[ImageResult]:
        index, path = item
        try:
            return evaluate_image(model, read_image(path), spec.with_seed(spec.seed + index), path.name)
        except MatIrError as e:
            logger.warning(f"Skipping {path.name}: {e}")
            return None

    threads = get_settings().threads
    if threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            outcomes = list(executor.map(_one, enumerate(paths)))
    else:
        outcomes = [_one(item) for item in enumerate(paths)]

    result = EvaluationResult(header=report_header(
        model.config, spec.seed, degradation=spec.describe(), dataset=Path(dataset).name or str(dataset),
    ))
    for outcome in outcomes:
        if outcome is None:
            result.skipped += 1
        else:
            result.results.append(outcome)
    logger.info(f"Evaluated {len(result.results)} images ({result.skipped} skipped)")
    if csv_path is not None:
        Path(csv_path).write_text(result.to_csv(), encoding="utf-8")
    return result
