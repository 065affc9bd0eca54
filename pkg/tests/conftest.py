"""Pytest configuration and shared fixtures."""
import os
import sys

import numpy as np
import pytest

# Ensure matir is on path when running tests from project root
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from matir.attention.triangle import GeometryRegistry  # noqa: E402
from matir.model.config import preset  # noqa: E402
from matir.pipeline.images import ImagePlane, write_image  # noqa: E402
from matir.settings import reset_settings  # noqa: E402


def pytest_collection_modifyitems(config, items):
    """Skip @pytest.mark.slow tests unless MATIR_RUN_SLOW is set."""
    if os.getenv("MATIR_RUN_SLOW", "").strip().lower() in ("1", "true", "yes", "on"):
        return
    skip_slow = pytest.mark.skip(reason="slow oracle; set MATIR_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _fresh_settings():
    """Every test sees settings re-read from its own environment."""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return preset("tiny")


@pytest.fixture
def tiny_denoise_config():
    return preset("tiny", task="denoise", scale=1)


@pytest.fixture
def clear_geometry():
    GeometryRegistry.clear()
    yield
    GeometryRegistry.clear()


def smooth_image(height: int, width: int, seed: int = 0) -> ImagePlane:
    """Low-frequency RGB test image (gradients plus a seeded sinusoid)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    phase = rng.uniform(0, 2 * np.pi, size=3)
    planes = [
        0.5 + 0.35 * np.sin(2 * np.pi * (xx / width + yy / (2 * height)) + phase[c]) for c in range(3)
    ]
    pixels = np.clip(np.round(np.stack(planes, axis=-1) * 255.0), 0, 255).astype(np.uint8)
    return ImagePlane(pixels)


@pytest.fixture
def make_image():
    return smooth_image


@pytest.fixture
def image_dir(tmp_path):
    """Folder with three 32x32 PNG images and one unreadable file."""
    folder = tmp_path / "images"
    folder.mkdir()
    for i in range(3):
        write_image(folder / f"img_{i}.png", smooth_image(32, 32, seed=i))
    (folder / "broken.png").write_bytes(b"not an image")
    return folder
