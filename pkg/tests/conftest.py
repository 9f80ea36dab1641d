import numpy as np
import pytest

from gdq.e2b import E2BConfig, resolve_thresholds
from gdq.entropy import EntropyConfig, build_entropy_stats
from gdq.gbc import seeded_gbc
from gdq.image_io import save_image
from gdq.srnet import SrArch, seeded_model


def synth_image(rng, hw=(96, 96), channels=3):
    """Procedural image with a smooth half and a textured half (varied entropy)."""
    h, w = hw
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    planes = []
    for c in range(channels):
        phase = rng.uniform(0, 2 * np.pi)
        smooth = 0.5 + 0.3 * np.sin(2 * np.pi * (3 * xx + 2 * yy) + phase)
        texture = rng.normal(0.0, 0.15, (h, w))
        mask = (xx > 0.5).astype(np.float64)
        planes.append(np.clip(smooth + mask * texture, 0.0, 1.0))
    return np.stack(planes)[None].astype(np.float32)


@pytest.fixture(scope="session")
def small_model():
    return seeded_model(0, SrArch(scale=2))


@pytest.fixture(scope="session")
def small_gbc():
    return seeded_gbc(0)


@pytest.fixture(scope="session")
def small_stats():
    rng = np.random.default_rng(7)
    patches = [synth_image(rng, (48, 48)) for _ in range(24)]
    return build_entropy_stats(patches, EntropyConfig())


@pytest.fixture(scope="session")
def small_thresholds(small_stats):
    return resolve_thresholds(small_stats, E2BConfig())


@pytest.fixture()
def corpus_dir(tmp_path):
    rng = np.random.default_rng(11)
    d = tmp_path / "corpus"
    d.mkdir()
    for i in range(3):
        save_image(d / f"img{i:02d}.png", synth_image(rng, (96, 96)))
    return d
