"""Synthetic stand-in for a captured face dataset and a trained predictor.

Poses are drawn uniformly from configurable 6DoF ranges (camera distance
defaults to 0.3-0.9 m).  The face mesh is a deterministic ellipsoidal
patch (about 18 cm tall, 14 cm wide, 8 cm deep) with seeded smooth
radial perturbations, triangulated over a jittered-grid disk in UV
space; the default cardinality is 1220 vertices and 2304 triangles.
An "oracle predictor" corrupts ground-truth correspondences with
configurable noise instead of running a network.

Per-sample randomness derives from (global seed, sample index) so that
generation order or parallelism can never change outputs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .correspondence import (
    CorrespondenceMatrix,
    PixelSet,
    build_gt_correspondence,
    corresponding_points,
    load_correspondence,
    rasterize_segmentation,
    sample_pixels,
    save_correspondence,
)
from .errors import InvariantViolation, ParseError
from .geometry import (
    CameraIntrinsics,
    EulerAngles,
    RigidPose,
    TriangleMesh,
    euler_to_rotation,
)
from .meshio import load_mesh, save_mesh
from .pfm import read_scalar_pfm, write_scalar_pfm

_BASE_BOUNDARY = 134  # boundary vertices at n=1220, giving exactly 2304 triangles


@dataclass(frozen=True)
class PoseRanges:
    """Uniform sampling ranges: angles in degrees, translations in meters."""

    yaw: tuple = (-45.0, 45.0)
    pitch: tuple = (-30.0, 30.0)
    roll: tuple = (-30.0, 30.0)
    tx: tuple = (-0.15, 0.15)
    ty: tuple = (-0.15, 0.15)
    tz: tuple = (0.3, 0.9)

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll", "tx", "ty", "tz"):
            lo, hi = (float(v) for v in getattr(self, name))
            object.__setattr__(self, name, (lo, hi))
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise InvariantViolation(f"range {name} must satisfy min <= max")
        if self.tz[0] <= 0:
            raise InvariantViolation("tz range must stay strictly positive")


@dataclass(frozen=True)
class NoiseModel:
    """Oracle-predictor corruption knobs; all zero means identity."""

    pixel_sigma: float = 0.0    # px, Gaussian jitter on the sampled pixels
    corr_sigma: float = 0.0     # Dirichlet-style jitter on correspondence rows
    outlier_rate: float = 0.0   # fraction of rows replaced by a random vertex
    vertex_sigma: float = 0.0   # m, Gaussian jitter on the corresponding points
    seed: int = 0

    def __post_init__(self):
        for name in ("pixel_sigma", "corr_sigma", "outlier_rate", "vertex_sigma"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v) or v < 0:
                raise InvariantViolation(f"{name} must be finite and >= 0")
        if self.outlier_rate > 1:
            raise InvariantViolation("outlier_rate must be <= 1")

    def is_zero(self) -> bool:
        return (
            self.pixel_sigma == 0
            and self.corr_sigma == 0
            and self.outlier_rate == 0
            and self.vertex_sigma == 0
        )


@dataclass(frozen=True)
class SyntheticSample:
    mesh: TriangleMesh
    pose: RigidPose
    intrinsics: CameraIntrinsics
    width: int
    height: int
    pixels: PixelSet
    correspondence: CorrespondenceMatrix
    mask: np.ndarray
    sample_id: str


def sample_pose(ranges: PoseRanges, seed) -> RigidPose:
    """Independent uniform draws (yaw, pitch, roll, tx, ty, tz order)."""
    rng = np.random.default_rng(seed)
    yaw = rng.uniform(*ranges.yaw)
    pitch = rng.uniform(*ranges.pitch)
    roll = rng.uniform(*ranges.roll)
    tx = rng.uniform(*ranges.tx)
    ty = rng.uniform(*ranges.ty)
    tz = rng.uniform(*ranges.tz)
    rotation = euler_to_rotation(EulerAngles(yaw, pitch, roll))
    return RigidPose(rotation, np.array([tx, ty, tz]))


def _disk_points(rng, n_vertices):
    """Boundary ring on an ellipse + jittered interior grid, all in [0, 1)^2."""
    boundary = max(3, min(n_vertices - 1, round(_BASE_BOUNDARY * math.sqrt(n_vertices / 1220.0))))
    interior = n_vertices - boundary
    theta = (np.arange(boundary) + 0.5) / boundary * 2.0 * math.pi
    ring = np.stack(
        [0.5 + 0.48 * np.cos(theta), 0.5 + 0.46 * np.sin(theta)], axis=1
    )
    grid = max(2, int(math.ceil(math.sqrt(max(interior, 1) / 0.6))))
    while True:
        centers = (np.arange(grid) + 0.5) / grid
        xx, yy = np.meshgrid(centers, centers)
        cand = np.stack([xx.ravel(), yy.ravel()], axis=1)
        cand = cand + rng.uniform(-0.3 / grid, 0.3 / grid, size=cand.shape)
        keep = ((cand[:, 0] - 0.5) / 0.48) ** 2 + ((cand[:, 1] - 0.5) / 0.46) ** 2 < 0.92**2
        cand = cand[keep]
        if len(cand) >= interior:
            break
        grid += 1
    return np.vstack([ring, cand[:interior]]), boundary


def make_synthetic_face(seed, n_vertices: int = 1220) -> TriangleMesh:
    """Deterministic face-like open surface with injective UVs.

    The UV parameterization doubles as the triangulation domain, so the
    triangle count is exactly 2*n - 2 - boundary (2304 at the default
    cardinality).
    """
    if n_vertices < 4:
        raise InvariantViolation("need at least 4 vertices")
    rng = np.random.default_rng(seed)
    uv, _boundary = _disk_points(rng, n_vertices)

    tri = Delaunay(uv)
    simplices = tri.simplices.astype(np.int64)
    if len(np.unique(simplices)) != n_vertices:
        raise InvariantViolation("triangulation dropped vertices; try another seed")
    # orient every triangle counter-clockwise in UV space
    a = uv[simplices[:, 0]]
    e1 = uv[simplices[:, 1]] - a
    e2 = uv[simplices[:, 2]] - a
    flip = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    order = np.lexsort((simplices[:, 2], simplices[:, 1], simplices[:, 0]))
    simplices = simplices[order]

    # ellipsoidal patch, bulging toward -z so the posed face looks at the camera
    lon = (uv[:, 0] - 0.5) * 2.4
    lat = (uv[:, 1] - 0.5) * 2.6
    bump = np.zeros(n_vertices)
    for _ in range(6):
        fu, fv = rng.integers(1, 4, size=2)
        amp = rng.uniform(-0.02, 0.02)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        bump += amp * np.cos(2.0 * math.pi * (fu * uv[:, 0] + fv * uv[:, 1]) + phase)
    radial = 1.0 + bump
    verts = np.stack(
        [
            0.07 * np.cos(lat) * np.sin(lon),
            0.09 * np.sin(lat),
            -0.08 * np.cos(lat) * np.cos(lon),
        ],
        axis=1,
    ) * radial[:, None]
    verts -= verts.mean(axis=0)
    return TriangleMesh(verts, simplices, uv)


def make_sample(
    mesh: TriangleMesh,
    ranges: PoseRanges,
    intr: CameraIntrinsics,
    width: int,
    height: int,
    m: int,
    global_seed: int,
    index: int,
) -> SyntheticSample:
    """Build one cross-consistent sample; seeds derive from (seed, index)."""
    pose = sample_pose(ranges, [global_seed, index, 0])
    mask = rasterize_segmentation(mesh, pose, intr, height, width)
    pixels = sample_pixels(mask, m, [global_seed, index, 1])
    # perspective-correct weights make corresponding_points land exactly on
    # the sampled pixels, so the zero-noise pipeline recovers poses exactly
    corr = build_gt_correspondence(mesh, pose, intr, pixels, perspective_correct=True)
    return SyntheticSample(
        mesh, pose, intr, width, height, pixels, corr, mask, f"sample_{index:05d}"
    )


def corrupt(sample: SyntheticSample, noise: NoiseModel):
    """Oracle predictor: ground truth plus noise.

    Returns (pixels, correspondence, points) where points are the noisy
    corresponding 3D points fed to PnP.  Corruption order is fixed:
    outlier rows (the row becomes a one-hot on a uniform random vertex
    and the pixel a uniform draw over the frame), row jitter, pixel
    jitter, vertex jitter.
    """
    rng = np.random.default_rng([noise.seed, _stable_id_key(sample.sample_id)])
    coords = np.array(sample.pixels.coords)
    m = len(coords)
    n = sample.correspondence.n

    rows = [sample.correspondence.row(i) for i in range(m)]
    if noise.outlier_rate > 0:
        hit = rng.random(m) < noise.outlier_rate
        targets = rng.integers(0, n, size=m)
        scrambled = rng.uniform(
            [0.0, 0.0], [sample.width, sample.height], size=(m, 2)
        )
        rows = [
            ((np.array([targets[i]]), np.array([1.0])) if hit[i] else rows[i])
            for i in range(m)
        ]
        coords[hit] = scrambled[hit]
    if noise.corr_sigma > 0:
        jittered = []
        for idx, w in rows:
            mix = rng.dirichlet(np.ones(len(w)))
            jittered.append((idx, (w + noise.corr_sigma * mix) / (1.0 + noise.corr_sigma)))
        rows = jittered
    corr = CorrespondenceMatrix.from_rows(rows, n)

    points = corresponding_points(corr, sample.mesh)
    if noise.pixel_sigma > 0:
        coords = coords + rng.normal(0.0, noise.pixel_sigma, size=coords.shape)
    if noise.vertex_sigma > 0:
        points = points + rng.normal(0.0, noise.vertex_sigma, size=points.shape)
    return PixelSet(coords), corr, points


def _stable_id_key(sample_id: str) -> int:
    """Stable non-negative integer derived from a sample id (not hash())."""
    acc = 0
    for ch in sample_id:
        acc = (acc * 131 + ord(ch)) % (2**31 - 1)
    return acc


@dataclass(frozen=True)
class DatasetConfig:
    n_samples: int
    seed: int = 0
    m: int = 1024
    width: int = 1280
    height: int = 720
    fx: float = 1000.0
    fy: float = 1000.0
    cx: float = 640.0
    cy: float = 360.0
    mesh_vertices: int = 1220
    ranges: PoseRanges = field(default_factory=PoseRanges)

    def __post_init__(self):
        if self.n_samples < 0:
            raise InvariantViolation("n_samples must be >= 0")
        if self.seed < 0:
            raise InvariantViolation("seed must be >= 0")
        if self.m < 4:
            raise InvariantViolation("m must be >= 4")
        if self.width < 2 or self.height < 2:
            raise InvariantViolation("frame must be at least 2x2")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "m": self.m,
            "width": self.width,
            "height": self.height,
            "intrinsics": {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy},
            "mesh_vertices": self.mesh_vertices,
            "ranges": {
                "yaw": list(self.ranges.yaw),
                "pitch": list(self.ranges.pitch),
                "roll": list(self.ranges.roll),
                "tx": list(self.ranges.tx),
                "ty": list(self.ranges.ty),
                "tz": list(self.ranges.tz),
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetConfig":
        r = d.get("ranges", {})
        ranges = PoseRanges(
            **{k: tuple(v) for k, v in r.items()}
        ) if r else PoseRanges()
        intr = d.get("intrinsics", {})
        return DatasetConfig(
            n_samples=d["n_samples"],
            seed=d.get("seed", 0),
            m=d.get("m", 1024),
            width=d.get("width", 1280),
            height=d.get("height", 720),
            fx=intr.get("fx", 1000.0),
            fy=intr.get("fy", 1000.0),
            cx=intr.get("cx", 640.0),
            cy=intr.get("cy", 360.0),
            mesh_vertices=d.get("mesh_vertices", 1220),
            ranges=ranges,
        )


def _atomic_json(payload: dict, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_pixels(coords, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        for x, y in coords:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
    os.replace(tmp, path)


def _read_pixels(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("pixel line must hold x y", path, line_no)
            rows.append([float(parts[0]), float(parts[1])])
    return np.asarray(rows, dtype=np.float64)


def generate_dataset(config: DatasetConfig, out_dir) -> str:
    """Write mesh, per-sample files and a manifest; returns the manifest path.

    Regenerating with the same config produces bit-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    mesh = make_synthetic_face(config.seed, config.mesh_vertices)
    mesh_name = "mesh.obj"
    save_mesh(mesh, os.path.join(out_dir, mesh_name))
    intr = config.intrinsics()

    entries = []
    for index in range(config.n_samples):
        sample = make_sample(
            mesh, config.ranges, intr, config.width, config.height,
            config.m, config.seed, index,
        )
        pixels_name = f"{sample.sample_id}.pixels.txt"
        corr_name = f"{sample.sample_id}.corr.txt"
        mask_name = f"{sample.sample_id}.mask.pfm"
        _write_pixels(sample.pixels.coords, os.path.join(out_dir, pixels_name))
        save_correspondence(sample.correspondence, os.path.join(out_dir, corr_name))
        write_scalar_pfm(sample.mask.astype(np.float32), os.path.join(out_dir, mask_name))
        entries.append(
            {
                "id": sample.sample_id,
                "mesh": mesh_name,
                "pose": {
                    "rotation": [float(v) for v in sample.pose.rotation.reshape(-1)],
                    "translation": [float(v) for v in sample.pose.translation],
                },
                "intrinsics": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy},
                "width": config.width,
                "height": config.height,
                "pixels": pixels_name,
                "correspondence": corr_name,
                "mask": mask_name,
            }
        )
    manifest_path = os.path.join(out_dir, "manifest.json")
    _atomic_json({"config": config.to_dict(), "samples": entries}, manifest_path)
    return manifest_path


def load_manifest(path):
    """Returns (DatasetConfig, list of raw sample entries, base directory)."""
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    if "config" not in payload or "samples" not in payload:
        raise ParseError("manifest must hold 'config' and 'samples'", path)
    return (
        DatasetConfig.from_dict(payload["config"]),
        payload["samples"],
        os.path.dirname(os.path.abspath(path)),
    )


def load_sample(entry: dict, base_dir) -> SyntheticSample:
    mesh = load_mesh(os.path.join(base_dir, entry["mesh"]))
    pose = RigidPose(
        np.asarray(entry["pose"]["rotation"], dtype=np.float64).reshape(3, 3),
        np.asarray(entry["pose"]["translation"], dtype=np.float64),
    )
    intr = CameraIntrinsics(**entry["intrinsics"])
    pixels = PixelSet(_read_pixels(os.path.join(base_dir, entry["pixels"])))
    corr = load_correspondence(os.path.join(base_dir, entry["correspondence"]))
    mask = (read_scalar_pfm(os.path.join(base_dir, entry["mask"])) != 0).astype(np.uint8)
    return SyntheticSample(
        mesh, pose, intr, entry["width"], entry["height"],
        pixels, corr, mask, entry["id"],
    )
