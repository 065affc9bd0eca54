"""
Desk-scale training loop.

Per step: sample patches -> dihedral augment -> degrade -> forward -> L1 ->
Adam step, with the learning rate halved at each milestone. Validation runs at
step 0, every `val_every` steps and after the last step, on a fixed held-out
patch set: centre crops of a separate folder, or of the last `val_patches`
training images, which then never reach the sampler. Every random draw comes from one generator seeded by TrainSpec.seed,
so two runs with the same seed produce identical reports.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from matir.errors import ConfigError, FormatError, TrainingError
from matir.model.config import MatIrConfig, describe_validation_error
from matir.model.network import MatIrModel
from matir.pipeline.degrade import DegradationSpec
from matir.pipeline.degrade import degrade as apply_degradation
from matir.pipeline.images import ImagePlane, list_images, read_image
from matir.pipeline.metrics import psnr
from matir.pipeline.optim import Adam, MultiStepSchedule, default_milestones
from matir.pipeline.report import AblationReport, StepRecord, TrainingReport, report_header
from matir.settings import get_settings
from matir.tensor import ops
from matir.tensor.core import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

SR_PATCH = 64
DENOISE_PATCH = 128
Dataset = Union[str, Path, Sequence[ImagePlane]]


class TrainSpec(BaseModel):
    """Optimiser, sampling and validation settings for one run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    patch_size: Optional[int] = Field(None, ge=1)
    batch_size: int = Field(4, ge=1)
    lr: float = Field(2e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    milestones: Optional[List[int]] = None
    augment: bool = True
    max_steps: int = Field(2000, ge=0)
    seed: int = Field(0, ge=0)
    sigma: float = Field(15.0, ge=0)
    val_every: int = Field(250, ge=1)
    val_patches: int = Field(4, ge=1)
    # Draw each training image's noise once (seed + image index) and reuse it
    fixed_noise: bool = False

    def input_patch(self, config: MatIrConfig) -> int:
        """Model input patch side (LR side for SR)."""
        if self.patch_size is not None:
            return self.patch_size
        return SR_PATCH if config.task == "sr" else DENOISE_PATCH

    def schedule(self) -> MultiStepSchedule:
        milestones = self.milestones if self.milestones is not None else default_milestones(self.max_steps)
        return MultiStepSchedule(self.lr, milestones)


def make_train_spec(**fields: Any) -> TrainSpec:
    try:
        return TrainSpec(**fields)
    except ValidationError as e:
        raise ConfigError(f"invalid training spec: {describe_validation_error(e)}") from e


def dihedral(pixels: np.ndarray, k: int) -> np.ndarray:
    """k in 0..7: rotate by 90*(k % 4) degrees, then flip horizontally when k >= 4."""
    out = np.rot90(pixels, k % 4, axes=(0, 1))
    if k >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def load_dataset(dataset: Dataset) -> List[ImagePlane]:
    """
    Raises:
        TrainingError if no readable image is found
    """
    if isinstance(dataset, (str, Path)):
        images = []
        for path in list_images(dataset):
            try:
                images.append(read_image(path).to_rgb())
            except FormatError as e:
                logger.warning(f"Skipping unreadable image {path}: {e}")
    else:
        images = [img.to_rgb() for img in dataset]
    if not images:
        raise TrainingError(f"dataset {dataset} contains no readable images")
    return images


def degradation_for(config: MatIrConfig, tspec: TrainSpec) -> DegradationSpec:
    if config.task == "sr":
        return DegradationSpec(kind="bicubic", scale=config.scale)
    return DegradationSpec(kind="noise", sigma=tspec.sigma)


@dataclass(frozen=True)
class Sample:
    """Degraded model input and clean target for one patch."""
    degraded: ImagePlane
    clean: ImagePlane


def _make_sample(clean: ImagePlane, spec: DegradationSpec) -> Sample:
    return Sample(degraded=apply_degradation(clean, spec), clean=clean)


def fixed_noisy_images(images: Sequence[ImagePlane], spec: DegradationSpec, seed: int) -> List[ImagePlane]:
    """Each image degraded once, image i with noise seed `seed + i`."""
    return [apply_degradation(img, spec.with_seed(seed + i)) for i, img in enumerate(images)]


def _crop_pair(clean: ImagePlane, noisy: ImagePlane, top: int, left: int, crop: int, k: int) -> Sample:
    def cut(img: ImagePlane) -> ImagePlane:
        return ImagePlane(dihedral(img.pixels[top:top + crop, left:left + crop], k))

    return Sample(degraded=cut(noisy), clean=cut(clean))


class PatchSampler:
    """
    Random crops of the training images, drawn from one seeded generator.

    With `noisy` given (one pre-degraded image per training image) the noise
    is fixed: every crop of an image sees the same noise realisation.
    """

    def __init__(
        self,
        images: Sequence[ImagePlane],
        crop: int,
        spec: DegradationSpec,
        augment: bool,
        seed: int,
        noisy: Optional[Sequence[ImagePlane]] = None,
    ):
        for img in images:
            if img.height < crop or img.width < crop:
                raise TrainingError(f"image {img.height}x{img.width} smaller than the {crop}x{crop} training crop")
        self.images = list(images)
        self.noisy = list(noisy) if noisy is not None else None
        self.crop = crop
        self.spec = spec
        self.augment = augment
        self.rng = np.random.default_rng(seed)

    def _position(self) -> Tuple[int, int, int, int]:
        index = int(self.rng.integers(len(self.images)))
        img = self.images[index]
        top = int(self.rng.integers(img.height - self.crop + 1))
        left = int(self.rng.integers(img.width - self.crop + 1))
        k = int(self.rng.integers(8)) if self.augment else 0
        return index, top, left, k

    def draw(self) -> Tuple[ImagePlane, DegradationSpec]:
        index, top, left, k = self._position()
        pixels = self.images[index].pixels[top:top + self.crop, left:left + self.crop]
        seed = int(self.rng.integers(2 ** 31))
        return ImagePlane(dihedral(pixels, k)), self.spec.with_seed(seed)

    def batch(self, size: int, executor: Optional[ThreadPoolExecutor]) -> List[Sample]:
        if self.noisy is not None:
            positions = [self._position() for _ in range(size)]
            return [_crop_pair(self.images[i], self.noisy[i], top, left, self.crop, k) for i, top, left, k in positions]
        draws = [self.draw() for _ in range(size)]
        if executor is None:
            return [_make_sample(c, s) for c, s in draws]
        return list(executor.map(lambda d: _make_sample(*d), draws))


def split_validation(
    images: List[ImagePlane],
    count: int,
    held_out: Optional[List[ImagePlane]] = None,
) -> Tuple[List[ImagePlane], List[ImagePlane], str]:
    """
    Training images, validation images and a label for the report.

    Validation uses `held_out` when given, else the last `count` images, which
    are then kept out of training. A dataset too small to spare them is
    validated on its training images.
    """
    if held_out is not None:
        return images, held_out[:count], "held-out folder"
    if len(images) > count:
        return images[:-count], images[-count:], "held-out images"
    logger.warning(f"Only {len(images)} training images; validating on training images")
    return images, images[:count], "training images"


def validation_set(
    images: Sequence[ImagePlane],
    crop: int,
    spec: DegradationSpec,
    count: int,
    noisy: Optional[Sequence[ImagePlane]] = None,
) -> List[Sample]:
    """
    Centre crops of the first `count` images with fixed noise seeds, or cut
    from `noisy` when the training noise is fixed.

    Raises:
        TrainingError if an image is smaller than the crop
    """
    samples = []
    for i, img in enumerate(images[:count]):
        if img.height < crop or img.width < crop:
            raise TrainingError(f"validation image {img.height}x{img.width} smaller than the {crop}x{crop} crop")
        top = (img.height - crop) // 2
        left = (img.width - crop) // 2
        if noisy is not None:
            samples.append(_crop_pair(img, noisy[i], top, left, crop, 0))
        else:
            samples.append(_make_sample(img.crop(top, left, crop, crop), spec.with_seed(10_000 + i)))
    return samples


def sample_loss(model: MatIrModel, sample: Sample) -> Tensor:
    restored = model(sample.degraded.to_tensor())
    return ops.l1_loss(restored, sample.clean.to_array())


def validate(model: MatIrModel, samples: Sequence[Sample]) -> Tuple[float, float]:
    """Mean L1 and mean Y-channel PSNR over the validation samples."""
    losses, scores = [], []
    with no_grad():
        for sample in samples:
            restored = model(sample.degraded.to_tensor())
            losses.append(float(np.mean(np.abs(restored.data - sample.clean.to_array()))))
            scores.append(psnr(ImagePlane.from_array(restored.data), sample.clean))
    return float(np.mean(losses)), float(np.mean(scores))


def train(
    model: MatIrModel,
    dataset: Dataset,
    tspec: TrainSpec,
    report_path: Optional[Union[str, Path]] = None,
    val_dataset: Optional[Dataset] = None,
) -> TrainingReport:
    """
    Train model in place.

    Raises:
        ConfigError if the patch size is not a multiple of the window size
        TrainingError on an empty dataset or a non-finite loss (carries the step)
    """
    config = model.config
    patch = tspec.input_patch(config)
    if patch % config.window_size:
        raise ConfigError(f"patch_size {patch} must be a multiple of window_size {config.window_size}")
    crop = patch * config.scale
    held_out = load_dataset(val_dataset) if val_dataset is not None else None
    train_images, val_images, validation = split_validation(load_dataset(dataset), tspec.val_patches, held_out)
    spec = degradation_for(config, tspec)
    fixed = tspec.fixed_noise and spec.kind == "noise"
    noisy = fixed_noisy_images(train_images, spec, tspec.seed) if fixed else None
    sampler = PatchSampler(train_images, crop, spec, tspec.augment, tspec.seed, noisy=noisy)
    val_noisy = noisy if fixed and validation == "training images" else None
    val_samples = validation_set(val_images, crop, spec, tspec.val_patches, noisy=val_noisy)
    optimizer = Adam(list(model.named_parameters()), lr=tspec.lr, beta1=tspec.beta1, beta2=tspec.beta2)
    schedule = tspec.schedule()

    report = TrainingReport(header=report_header(
        config,
        tspec.seed,
        loss="L1",
        batch_size=f"{tspec.batch_size} (desk-scale)",
        patch_size=patch,
        max_steps=tspec.max_steps,
        milestones=",".join(str(m) for m in schedule.milestones) or "none",
        lr=tspec.lr,
        train_images=len(train_images),
        val_images=len(val_samples),
        validation=validation,
        fixed_noise=fixed,
    ))
    val_loss, val_psnr = validate(model, val_samples)
    report.add(StepRecord(step=0, loss=val_loss, lr=schedule.lr_at(0), val_psnr=val_psnr))
    logger.info(f"step 0: val L1 {val_loss:.5f}, val PSNR {val_psnr:.3f} dB")

    threads = get_settings().threads
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for step in range(1, tspec.max_steps + 1):
            optimizer.lr = schedule.lr_at(step)
            optimizer.zero_grad()
            samples = sampler.batch(tspec.batch_size, executor)
            total = sample_loss(model, samples[0])
            for sample in samples[1:]:
                total = ops.add(total, sample_loss(model, sample))
            loss = ops.mul(total, 1.0 / len(samples))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at step {step}", step=step)
            backward(loss)
            optimizer.step()

            record = StepRecord(step=step, loss=value, lr=optimizer.lr)
            if step % tspec.val_every == 0 or step == tspec.max_steps:
                _, record.val_psnr = validate(model, val_samples)
                logger.info(f"step {step}: loss {value:.5f}, val PSNR {record.val_psnr:.3f} dB")
            else:
                logger.debug(f"step {step}: loss {value:.5f}, lr {optimizer.lr:.3g}")
            report.add(record)
    finally:
        if executor is not None:
            executor.shutdown()

    if report_path is not None:
        report.write(report_path)
    return report


def run_ablation(
    config: MatIrConfig,
    reduced: MatIrConfig,
    dataset: Dataset,
    tspec: TrainSpec,
    label: str,
    val_dataset: Optional[Dataset] = None,
) -> AblationReport:
    """Train the full and reduced configs under the same seed, budget and validation set."""
    full_model = MatIrModel(config)
    reduced_model = MatIrModel(reduced)
    full_report = train(full_model, dataset, tspec, val_dataset=val_dataset)
    reduced_report = train(reduced_model, dataset, tspec, val_dataset=val_dataset)
    header = report_header(config, tspec.seed, reduced_config_hash=reduced_report.header["config_hash"],
                           variant=label, max_steps=tspec.max_steps)
    return AblationReport(
        header=header,
        full_params=full_model.num_parameters(),
        reduced_params=reduced_model.num_parameters(),
        full=full_report,
        reduced=reduced_report,
        label=label,
    )
