import math

import numpy as np
import pytest

from hybridblur.oracle import baseline, ground_truth
from hybridblur.pipeline import render_hybrid
from hybridblur.scene import (Camera, Light, Material, MeshInstance, RenderConfig, Scene,
                              Transform, quad_mesh)
from hybridblur.scenes import canonical_scene


def make_camera(size=64, vfov_deg=60.0):
    return Camera((0.0, 0.0, 0.0), (0.0, 0.0, -1.0), (0.0, 1.0, 0.0), math.radians(vfov_deg),
                  (size, size))


def quad_instance(mesh_id, depth, half=0.5, center=(0.0, 0.0), albedo=(0.5, 0.5, 0.5),
                  emissive=(0.0, 0.0, 0.0), shift=(0.0, 0.0)):
    """Camera-facing axis-aligned quad of half-size ``half`` at view depth ``depth``.

    ``shift`` is the xy translation between shutter open and close.
    """
    pos, nrm = quad_mesh()
    scale = (2 * half, 2 * half, 1.0)
    t0 = (center[0], center[1], -depth)
    t1 = (center[0] + shift[0], center[1] + shift[1], -depth)
    return MeshInstance(mesh_id, pos, nrm, Material(albedo, emissive),
                        Transform(t0, scale=scale), Transform(t1, scale=scale))


def make_scene(instances, size=64, ambient=(0.1, 0.1, 0.1), env=(0.2, 0.3, 0.4)):
    light = Light("directional", (0.0, 0.0, 1.0), (0.8, 0.8, 0.8))
    return Scene(tuple(instances), make_camera(size), (light,), env, ambient)


@pytest.fixture(scope="session")
def canonical():
    return canonical_scene()


@pytest.fixture(scope="session")
def canonical_frame(canonical):
    scene, cfg = canonical
    return render_hybrid(scene, cfg)


@pytest.fixture(scope="session")
def canonical_baseline(canonical):
    scene, cfg = canonical
    return baseline(scene, cfg)


@pytest.fixture(scope="session")
def canonical_truth(canonical):
    scene, cfg = canonical
    return ground_truth(scene, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


__all__ = ["make_camera", "quad_instance", "make_scene", "RenderConfig"]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
