"""Scene description, linear shutter motion, pinhole camera and render settings.

Scenes are immutable after loading.  Small vectors are stored as tuples so
the records compare and hash by value; triangle soups are float64 arrays of
shape ``(n, 3, 3)`` (triangle, vertex, xyz).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SceneError", "Transform", "Material", "Light", "Camera", "MeshInstance",
    "Scene", "RenderConfig", "load_scene", "scene_from_dict", "pose_at",
    "project", "unproject", "load_obj", "quad_mesh", "box_mesh",
    "checker_plane_mesh", "scene_diameter",
]

Vec3 = tuple[float, float, float]


class SceneError(ValueError):
    """Raised when a scene file cannot be turned into a valid scene."""

    def __init__(self, path, field_name, message):
        self.path = str(path)
        self.field = field_name
        super().__init__(f"{path}: {field_name}: {message}")


def _vec3(v) -> Vec3:
    a = tuple(float(x) for x in v)
    if len(a) != 3:
        raise ValueError(f"expected 3 components, got {len(a)}")
    return a  # type: ignore[return-value]


@dataclass(frozen=True)
class Transform:
    translation: Vec3 = (0.0, 0.0, 0.0)
    rotation: Vec3 = (0.0, 0.0, 0.0)  # Euler XYZ, radians
    scale: Vec3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if min(self.scale) <= 0.0:
            raise ValueError(f"scale components must be > 0, got {self.scale}")

    def rotation_matrix(self) -> np.ndarray:
        rx, ry, rz = self.rotation
        cx, sx = math.cos(rx), math.sin(rx)
        cy, sy = math.cos(ry), math.sin(ry)
        cz, sz = math.cos(rz), math.sin(rz)
        Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        # X is applied first.
        return Rz @ Ry @ Rx

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        R = self.rotation_matrix()
        return (pts * np.asarray(self.scale)) @ R.T + np.asarray(self.translation)

    def apply_normals(self, nrm: np.ndarray) -> np.ndarray:
        # inverse transpose of R*S is R*S^-1
        R = self.rotation_matrix()
        out = (nrm / np.asarray(self.scale)) @ R.T
        return out / np.linalg.norm(out, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Material:
    albedo: Vec3 = (0.8, 0.8, 0.8)
    emissive: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not all(0.0 <= a <= 1.0 for a in self.albedo):
            raise ValueError(f"albedo must lie in [0,1], got {self.albedo}")
        if min(self.emissive) < 0.0:
            raise ValueError(f"emissive must be >= 0, got {self.emissive}")


@dataclass(frozen=True)
class Light:
    """A directional or point light.

    For ``kind="directional"`` the vector is the unit direction from the
    surface *towards* the light; for ``kind="point"`` it is the position.
    """

    kind: str
    vector: Vec3
    intensity: Vec3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("directional", "point"):
            raise ValueError(f"unknown light kind {self.kind!r}")
        if min(self.intensity) < 0.0:
            raise ValueError("intensity must be >= 0")
        if self.kind == "directional":
            n = math.sqrt(sum(c * c for c in self.vector))
            if abs(n - 1.0) > 1e-6:
                raise ValueError(f"directional light direction must be unit length, |d|={n}")


@dataclass(frozen=True)
class Camera:
    position: Vec3
    look_at: Vec3
    up: Vec3
    vfov: float  # radians
    resolution: tuple[int, int]  # (W, H)

    def __post_init__(self):
        if not 0.0 < self.vfov < math.pi:
            raise ValueError(f"vfov must lie in (0, pi), got {self.vfov}")
        W, H = self.resolution
        if W < 8 or H < 8:
            raise ValueError(f"resolution must be at least 8x8, got {self.resolution}")
        fwd = np.subtract(self.look_at, self.position)
        if np.linalg.norm(fwd) == 0.0:
            raise ValueError("look_at coincides with position")
        c = np.cross(fwd, self.up)
        if np.linalg.norm(c) <= 1e-9 * np.linalg.norm(fwd) * np.linalg.norm(self.up):
            raise ValueError("up is parallel to the view direction")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / math.tan(self.vfov / 2.0)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return orthonormal (right, up, forward) world-space axes."""
        fwd = np.subtract(self.look_at, self.position).astype(float)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return right, up, fwd

    def packed(self) -> np.ndarray:
        """Flat float64 record consumed by the compiled kernels.

        Layout: position(3), right(3), up(3), forward(3), focal_px, W, H.
        """
        r, u, f = self.basis()
        return np.concatenate([np.asarray(self.position, float), r, u, f,
                               [self.focal_px, self.width, self.height]])


@dataclass(frozen=True, eq=False)
class MeshInstance:
    mesh_id: int
    positions: np.ndarray  # (n, 3, 3) object space
    normals: np.ndarray  # (n, 3, 3) object space, unit
    material: Material = Material()
    pose_open: Transform = Transform()
    pose_close: Transform = Transform()
    # Optional per-triangle albedo overriding material.albedo; procedural
    # checkerboards use it since the renderer has no texture support.
    triangle_albedo: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mesh_id < 1:
            raise ValueError(f"mesh_id must be >= 1, got {self.mesh_id}")
        pos = np.asarray(self.positions, dtype=float)
        nrm = np.asarray(self.normals, dtype=float)
        if pos.ndim != 3 or pos.shape[1:] != (3, 3) or len(pos) < 1:
            raise ValueError("an instance needs at least one (3, 3) triangle")
        if nrm.shape != pos.shape:
            raise ValueError("normals must match positions in shape")
        if np.any(np.abs(np.linalg.norm(nrm, axis=-1) - 1.0) > 1e-4):
            raise ValueError("vertex normals must be unit length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "normals", nrm)
        if self.triangle_albedo is not None:
            alb = np.asarray(self.triangle_albedo, dtype=float)
            if alb.shape != (len(pos), 3) or alb.min() < 0 or alb.max() > 1:
                raise ValueError("triangle_albedo must be (n, 3) in [0, 1]")
            object.__setattr__(self, "triangle_albedo", alb)

    @property
    def is_static(self) -> bool:
        return self.pose_open == self.pose_close

    def albedos(self) -> np.ndarray:
        if self.triangle_albedo is not None:
            return self.triangle_albedo
        return np.tile(np.asarray(self.material.albedo, float), (len(self.positions), 1))

    def world_positions(self, t: float) -> np.ndarray:
        return pose_at(self, t).apply_points(self.positions)

    def world_normals(self, t: float) -> np.ndarray:
        return pose_at(self, t).apply_normals(self.normals)

    def __eq__(self, other):
        if not isinstance(other, MeshInstance):
            return NotImplemented
        alb_eq = (self.triangle_albedo is None and other.triangle_albedo is None) or (
            self.triangle_albedo is not None and other.triangle_albedo is not None
            and np.array_equal(self.triangle_albedo, other.triangle_albedo))
        return (self.mesh_id == other.mesh_id and self.material == other.material
                and self.pose_open == other.pose_open and self.pose_close == other.pose_close
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.normals, other.normals) and alb_eq)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Scene:
    instances: tuple[MeshInstance, ...]
    camera: Camera
    lights: tuple[Light, ...] = ()
    environment_color: Vec3 = (0.0, 0.0, 0.0)
    ambient: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "lights", tuple(self.lights))
        ids = [inst.mesh_id for inst in self.instances]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate mesh_id in {ids}")

    @property
    def mesh_ids(self) -> set[int]:
        return {inst.mesh_id for inst in self.instances}

    def without(self, exclude_ids) -> "Scene":
        exclude = set(exclude_ids)
        return dataclasses.replace(
            self, instances=tuple(i for i in self.instances if i.mesh_id not in exclude))

    def is_static(self) -> bool:
        return all(inst.is_static for inst in self.instances)


@dataclass(frozen=True)
class RenderConfig:
    """Every tunable threshold of the pipeline.

    ``depth_scale`` and ``z_extent`` may be left as ``None``; call
    :meth:`resolved` to fill them from the scene (bounding-sphere diameter and
    a tenth of it, respectively).
    """

    sample_count: int = 15
    tile_size: int = 20
    min_speed: float = 0.5
    depth_delta_rel: float = 0.1
    depth_delta_abs: float = 0.01
    sobel_threshold: float = 1.0
    depth_scale: Optional[float] = None
    range_check_max: int = 32
    max_recursion: int = 4
    luminance_tol: float = 0.05
    ray_epsilon: float = 1e-3
    z_extent: Optional[float] = None
    id_mode: str = "luminance"
    ground_truth_time_samples: int = 64

    def __post_init__(self):
        if self.sample_count < 3 or self.sample_count % 2 == 0:
            raise ValueError(f"sample_count must be odd and >= 3, got {self.sample_count}")
        if self.tile_size < 1 or self.range_check_max < 1 or self.max_recursion < 1:
            raise ValueError("tile_size, range_check_max and max_recursion must be >= 1")
        if self.ground_truth_time_samples < 1:
            raise ValueError("ground_truth_time_samples must be >= 1")
        for name in ("min_speed", "depth_delta_rel", "depth_delta_abs", "sobel_threshold",
                     "luminance_tol", "ray_epsilon", "depth_scale", "z_extent"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if self.id_mode not in ("luminance", "mesh"):
            raise ValueError(f"id_mode must be 'luminance' or 'mesh', got {self.id_mode!r}")

    def resolved(self, scene: Scene) -> "RenderConfig":
        depth_scale = self.depth_scale if self.depth_scale is not None else scene_diameter(scene)
        z_extent = self.z_extent if self.z_extent is not None else 0.1 * depth_scale
        return dataclasses.replace(self, depth_scale=depth_scale, z_extent=z_extent)


def scene_diameter(scene: Scene) -> float:
    """Diameter of the sphere around the axis-aligned box of all posed geometry."""
    if not scene.instances:
        return 1.0
    pts = np.concatenate([inst.world_positions(t).reshape(-1, 3)
                          for inst in scene.instances for t in (0.0, 1.0)])
    d = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return d if d > 0 else 1.0


def pose_at(inst: MeshInstance, t: float) -> Transform:
    """Pose of ``inst`` at shutter time ``t``; every field is lerped independently."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"shutter time must lie in [0, 1], got {t}")
    a, b = inst.pose_open, inst.pose_close
    if t == 0.0:
        return a
    if t == 1.0:
        return b

    def lerp(u, v):
        return tuple((1.0 - t) * x + t * y for x, y in zip(u, v))

    return Transform(lerp(a.translation, b.translation), lerp(a.rotation, b.rotation),
                     lerp(a.scale, b.scale))


def project(cam: Camera, p_world) -> Optional[tuple[np.ndarray, float]]:
    """Project a world point to pixel coordinates (y down) and view depth.

    Returns ``None`` for points at or behind the camera plane.
    """
    r, u, f = cam.basis()
    d = np.asarray(p_world, float) - np.asarray(cam.position, float)
    depth = float(d @ f)
    if depth <= 1e-6:
        return None
    fp = cam.focal_px
    x = cam.width / 2.0 + fp * float(d @ r) / depth
    y = cam.height / 2.0 - fp * float(d @ u) / depth
    return np.array([x, y]), depth


def unproject(cam: Camera, xy, depth: float) -> np.ndarray:
    r, u, f = cam.basis()
    fp = cam.focal_px
    sx = (xy[0] - cam.width / 2.0) * depth / fp
    sy = -(xy[1] - cam.height / 2.0) * depth / fp
    return np.asarray(cam.position, float) + depth * f + sx * r + sy * u


# --------------------------------------------------------------------------
# Built-in primitives (object space, centered at the origin)

def quad_mesh():
    """Unit square in the xy plane facing +z."""
    p = np.array([[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]])
    pos = np.array([[p[0], p[1], p[2]], [p[0], p[2], p[3]]])
    nrm = np.zeros_like(pos)
    nrm[..., 2] = 1.0
    return pos, nrm


def box_mesh():
    """Unit cube with flat outward normals, 12 triangles."""
    tris, nrms = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            n = np.zeros(3)
            n[axis] = sign
            a, b = [i for i in range(3) if i != axis]
            corners = []
            for ca, cb in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                c = np.zeros(3)
                c[axis] = 0.5 * sign
                c[a] = 0.5 * ca
                c[b] = 0.5 * cb
                corners.append(c)
            # wind counter-clockwise seen from outside
            if np.dot(np.cross(corners[1] - corners[0], corners[2] - corners[0]), n) < 0:
                corners = corners[::-1]
            tris += [[corners[0], corners[1], corners[2]], [corners[0], corners[2], corners[3]]]
            nrms += [[n, n, n], [n, n, n]]
    return np.array(tris), np.array(nrms)


def checker_plane_mesh(cells: int, albedo: Sequence[float], albedo_alt: Sequence[float]):
    """``cells`` x ``cells`` grid over the unit square facing +z, alternating albedo."""
    if cells < 1:
        raise ValueError("cells must be >= 1")
    tris, alb = [], []
    step = 1.0 / cells
    for j in range(cells):
        for i in range(cells):
            x0, y0 = -0.5 + i * step, -0.5 + j * step
            x1, y1 = x0 + step, y0 + step
            c = albedo if (i + j) % 2 == 0 else albedo_alt
            tris += [[[x0, y0, 0], [x1, y0, 0], [x1, y1, 0]], [[x0, y0, 0], [x1, y1, 0], [x0, y1, 0]]]
            alb += [c, c]
    pos = np.array(tris, dtype=float)
    nrm = np.zeros_like(pos)
    nrm[..., 2] = 1.0
    return pos, nrm, np.array(alb, dtype=float)


def load_obj(path):
    """Read a Wavefront OBJ (``v``, ``vn`` and ``f`` records only).

    Polygons are fan-triangulated.  Faces without normal references get the
    flat geometric normal.  Degenerate faces are dropped.
    """
    verts, vnorms, tris, nrms = [], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif tag == "vn":
                    vnorms.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    refs = []
                    for tok in parts[1:]:
                        fields = tok.split("/")
                        vi = int(fields[0])
                        vi = vi - 1 if vi > 0 else len(verts) + vi
                        ni = None
                        if len(fields) >= 3 and fields[2]:
                            ni = int(fields[2])
                            ni = ni - 1 if ni > 0 else len(vnorms) + ni
                        refs.append((vi, ni))
                    for k in range(1, len(refs) - 1):
                        tri = [refs[0], refs[k], refs[k + 1]]
                        p = np.array([verts[vi] for vi, _ in tri])
                        g = np.cross(p[1] - p[0], p[2] - p[0])
                        gl = np.linalg.norm(g)
                        if gl == 0.0:
                            continue
                        if all(ni is not None for _, ni in tri):
                            n = np.array([vnorms[ni] for _, ni in tri])
                            n /= np.linalg.norm(n, axis=1, keepdims=True)
                        else:
                            n = np.tile(g / gl, (3, 1))
                        tris.append(p)
                        nrms.append(n)
            except (ValueError, IndexError) as exc:
                raise SceneError(path, f"line {lineno}", str(exc)) from exc
    if not tris:
        raise SceneError(path, "f", "mesh contains no triangles")
    return np.array(tris), np.array(nrms)


# --------------------------------------------------------------------------
# JSON loading

def _finite(path, name, value):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SceneError(path, name, f"not numeric: {value!r}") from exc
    if not np.all(np.isfinite(arr)):
        raise SceneError(path, name, f"non-finite value {value!r}")
    return value


def _get_vec(path, d, key, name, default=None):
    if key not in d:
        if default is None:
            raise SceneError(path, name, "missing field")
        return default
    v = d[key]
    _finite(path, name, v)
    if isinstance(v, (int, float)):
        v = [v, v, v]
    try:
        return _vec3(v)
    except (TypeError, ValueError) as exc:
        raise SceneError(path, name, str(exc)) from exc


def _transform(path, d, name):
    if d is None:
        return Transform()
    rot = _get_vec(path, d, "rotation", f"{name}.rotation", (0.0, 0.0, 0.0))
    if "rotation_deg" in d:
        rot = tuple(math.radians(a) for a in _get_vec(path, d, "rotation_deg", f"{name}.rotation_deg"))
    try:
        return Transform(
            translation=_get_vec(path, d, "translation", f"{name}.translation", (0.0, 0.0, 0.0)),
            rotation=rot,
            scale=_get_vec(path, d, "scale", f"{name}.scale", (1.0, 1.0, 1.0)))
    except ValueError as exc:
        raise SceneError(path, name, str(exc)) from exc


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RenderConfig)}


def scene_from_dict(data: dict, path="<dict>", base_dir=None) -> tuple[Scene, RenderConfig]:
    """Build a scene and configuration from parsed scene JSON."""
    base_dir = base_dir if base_dir is not None else os.getcwd()
    if not isinstance(data, dict):
        raise SceneError(path, "<root>", "top level must be an object")
    if "camera" not in data:
        raise SceneError(path, "camera", "missing field")
    c = data["camera"]
    try:
        for key in ("vfov_deg", "width", "height"):
            if key not in c:
                raise SceneError(path, f"camera.{key}", "missing field")
            _finite(path, f"camera.{key}", c[key])
        camera = Camera(
            position=_get_vec(path, c, "position", "camera.position"),
            look_at=_get_vec(path, c, "look_at", "camera.look_at"),
            up=_get_vec(path, c, "up", "camera.up", (0.0, 1.0, 0.0)),
            vfov=math.radians(float(c["vfov_deg"])),
            resolution=(int(c["width"]), int(c["height"])))
    except SceneError:
        raise
    except ValueError as exc:
        raise SceneError(path, "camera", str(exc)) from exc

    lights = []
    for i, ld in enumerate(data.get("lights", [])):
        name = f"lights[{i}]"
        kind = ld.get("kind", "directional")
        try:
            if kind == "directional":
                v = np.array(_get_vec(path, ld, "direction", f"{name}.direction"))
                n = np.linalg.norm(v)
                if n == 0:
                    raise SceneError(path, f"{name}.direction", "zero vector")
                vec = _vec3(v / n)
            else:
                vec = _get_vec(path, ld, "position", f"{name}.position")
            lights.append(Light(kind, vec, _get_vec(path, ld, "intensity", f"{name}.intensity",
                                                    (1.0, 1.0, 1.0))))
        except SceneError:
            raise
        except ValueError as exc:
            raise SceneError(path, name, str(exc)) from exc

    instances = []
    seen = set()
    for i, idict in enumerate(data.get("instances", [])):
        name = f"instances[{i}]"
        if "mesh_id" not in idict:
            raise SceneError(path, f"{name}.mesh_id", "missing field")
        mesh_id = idict["mesh_id"]
        _finite(path, f"{name}.mesh_id", mesh_id)
        mesh_id = int(mesh_id)
        if mesh_id in seen:
            raise SceneError(path, f"{name}.mesh_id", f"duplicate mesh_id {mesh_id}")
        seen.add(mesh_id)
        md = idict.get("material", {})
        try:
            material = Material(_get_vec(path, md, "albedo", f"{name}.material.albedo", (0.8, 0.8, 0.8)),
                                _get_vec(path, md, "emissive", f"{name}.material.emissive", (0.0, 0.0, 0.0)))
        except SceneError:
            raise
        except ValueError as exc:
            raise SceneError(path, f"{name}.material", str(exc)) from exc
        prim = idict.get("primitive", "quad")
        tri_albedo = None
        if prim == "quad":
            pos, nrm = quad_mesh()
        elif prim == "box":
            pos, nrm = box_mesh()
        elif prim == "checker_plane":
            cells = idict.get("cells", 8)
            _finite(path, f"{name}.cells", cells)
            alt = _get_vec(path, md, "albedo_alt", f"{name}.material.albedo_alt",
                           tuple(0.25 * a for a in material.albedo))
            pos, nrm, tri_albedo = checker_plane_mesh(int(cells), material.albedo, alt)
        elif isinstance(prim, dict) and "obj" in prim:
            mesh_path = os.path.join(base_dir, prim["obj"])
            if not os.path.exists(mesh_path):
                raise SceneError(path, f"{name}.primitive.obj", f"mesh file not found: {mesh_path}")
            pos, nrm = load_obj(mesh_path)
        else:
            raise SceneError(path, f"{name}.primitive", f"unknown primitive {prim!r}")
        pose_open = _transform(path, idict.get("pose_open"), f"{name}.pose_open")
        pose_close = (_transform(path, idict["pose_close"], f"{name}.pose_close")
                      if "pose_close" in idict else pose_open)
        try:
            instances.append(MeshInstance(mesh_id, pos, nrm, material, pose_open, pose_close,
                                          tri_albedo))
        except ValueError as exc:
            raise SceneError(path, name, str(exc)) from exc

    scene = Scene(
        instances=tuple(instances), camera=camera, lights=tuple(lights),
        environment_color=_get_vec(path, data, "environment_color", "environment_color", (0.0, 0.0, 0.0)),
        ambient=_get_vec(path, data, "ambient", "ambient", (0.0, 0.0, 0.0)))

    overrides = dict(data.get("config", {}))
    for key, val in overrides.items():
        if key not in _CONFIG_FIELDS:
            raise SceneError(path, f"config.{key}", "unknown configuration field")
        if key != "id_mode":
            _finite(path, f"config.{key}", val)
    try:
        cfg = RenderConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise SceneError(path, "config", str(exc)) from exc
    return scene, cfg


def load_scene(path) -> tuple[Scene, RenderConfig]:
    """Load a JSON scene file; configuration fields absent from it keep defaults."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise SceneError(path, "<file>", "file not found") from exc
    except json.JSONDecodeError as exc:
        raise SceneError(path, f"line {exc.lineno}", f"JSON parse error: {exc.msg}") from exc
    return scene_from_dict(data, path, os.path.dirname(os.path.abspath(path)))
