import numpy as np
import pytest

from pithdetect.synthgen import WebSpec, generate_web


@pytest.fixture(scope="session")
def clean_web():
    """Noiseless concentric web at an off-grid center, 640px working size."""
    spec = WebSpec(size=(640, 640), center=(320.0, 300.0), n_rings=10, ring_spacing=28.0)
    return generate_web(spec)


@pytest.fixture(scope="session")
def small_web():
    """Small clean web for fast end-to-end tests (upscaled to 640 internally)."""
    spec = WebSpec(size=(320, 320), center=(160.0, 150.0), n_rings=9, ring_spacing=16.0)
    return generate_web(spec)


@pytest.fixture(scope="session")
def tiny_web_files(tmp_path_factory):
    """Three tiny webs written to disk with a manifest CSV, for eval/CLI tests."""
    from pithdetect.synthgen import save_web

    root = tmp_path_factory.mktemp("webs")
    rows = ["image,mask,gt_x,gt_y"]
    for i in range(3):
        spec = WebSpec(
            size=(200, 200),
            center=(100.0 + 6 * i, 98.0 - 4 * i),
            n_rings=6,
            ring_spacing=15.0,
            noise_sigma=0.01,
            seed=i,
        )
        paths = save_web(spec, str(root), name=f"web{i}")
        rows.append(f"web{i}.png,web{i}_mask.png,{spec.center[0]},{spec.center[1]}")
    manifest = root / "collection.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return root, manifest


def radial_deviation(midpoints: np.ndarray, angles: np.ndarray, center) -> np.ndarray:
    """Angular distance (mod pi) between segment angles and the true radial direction."""
    true_angle = np.mod(
        np.arctan2(midpoints[:, 1] - center[1], midpoints[:, 0] - center[0]), np.pi
    )
    dev = np.abs(np.mod(angles, np.pi) - true_angle)
    return np.minimum(dev, np.pi - dev)
