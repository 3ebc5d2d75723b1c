"""Readers and writers for the pipeline's on-disk formats.

* Trajectories: TUM text format, one pose per line
  ``timestamp tx ty tz qx qy qz qw`` (quaternion x, y, z, w), ``#`` comments.
* Point clouds: binary little-endian PLY with float32 x, y, z and optional
  uint8 red, green, blue.
* Gaussian scenes: binary little-endian PLY, one vertex per Gaussian with
  float32 properties x, y, z, log_scale_x/y/z, quat_w/x/y/z, opacity_logit,
  color_r/g/b.
* Images: 8-bit RGB PNG; float channels in [0, 1] are scaled by 255 and
  rounded half-up.
* Depth: "DPTH" magic, uint32-LE width and height, then width*height
  float32-LE values row-major from the top-left pixel.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import PoseSE3, PointCloud, quaternion_to_rotation, rotation_to_quaternion
from .splat.scene import GaussianScene

DEPTH_MAGIC = b"DPTH"


# ---------------------------------------------------------------------------
# TUM trajectories


def save_trajectory_tum(path, poses: list[PoseSE3], timestamps=None) -> None:
    path = Path(path)
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for i, pose in enumerate(poses):
        ts = float(i) if timestamps is None else float(timestamps[i])
        t = pose.translation
        w, x, y, z = rotation_to_quaternion(pose.rotation)
        vals = [ts, t[0], t[1], t[2], x, y, z, w]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trajectory_tum(path) -> tuple[list[PoseSE3], list[float]]:
    """Returns (poses, timestamps).  Raises ValueError with the line number
    on a malformed line."""
    poses: list[PoseSE3] = []
    stamps: list[float] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}: line {lineno}: expected 8 fields, got {len(parts)}")
        try:
            ts, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: non-numeric field") from exc
        poses.append(PoseSE3(quaternion_to_rotation([qw, qx, qy, qz]), [tx, ty, tz]))
        stamps.append(ts)
    return poses, stamps


# ---------------------------------------------------------------------------
# PLY point clouds


def save_point_cloud_ply(path, pcd: PointCloud) -> None:
    n = len(pcd)
    has_color = pcd.colors is not None
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {a}" for a in ("x", "y", "z")]
    if has_color:
        header += [f"property uchar {c}" for c in ("red", "green", "blue")]
    header += ["end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        pts = pcd.points.astype("<f4")
        if has_color:
            rgb = np.clip(np.floor(pcd.colors * 255.0 + 0.5), 0, 255).astype(np.uint8)
            rec = np.empty(
                n, dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)]
            )
            rec["xyz"] = pts
            rec["rgb"] = rgb
            f.write(rec.tobytes())
        else:
            f.write(pts.tobytes())


def _parse_ply_header(f) -> tuple[int, list[tuple[str, str]]]:
    line = f.readline().strip()
    if line != b"ply":
        raise ValueError("not a PLY file")
    fmt = f.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise ValueError("only binary little-endian PLY is supported")
    count = 0
    props: list[tuple[str, str]] = []
    while True:
        line = f.readline()
        if not line:
            raise ValueError("unterminated PLY header")
        line = line.strip()
        if line == b"end_header":
            break
        parts = line.decode("ascii").split()
        if parts[0] == "element":
            if parts[1] != "vertex":
                raise ValueError(f"unsupported PLY element {parts[1]}")
            count = int(parts[2])
        elif parts[0] == "property":
            props.append((parts[1], parts[2]))
    return count, props


_PLY_TYPES = {"float": "<f4", "uchar": "u1", "float32": "<f4", "uint8": "u1"}


def load_point_cloud_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        count, props = _parse_ply_header(f)
        dtype = np.dtype([(name, _PLY_TYPES[typ]) for typ, name in props])
        data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype)
    pts = np.stack([data["x"], data["y"], data["z"]], axis=-1).astype(np.float64)
    colors = None
    if all(c in data.dtype.names for c in ("red", "green", "blue")):
        colors = (
            np.stack([data["red"], data["green"], data["blue"]], axis=-1).astype(np.float64)
            / 255.0
        )
    return PointCloud(pts, colors=colors)


# ---------------------------------------------------------------------------
# PLY gaussian scenes

_SCENE_PROPS = (
    "x",
    "y",
    "z",
    "log_scale_x",
    "log_scale_y",
    "log_scale_z",
    "quat_w",
    "quat_x",
    "quat_y",
    "quat_z",
    "opacity_logit",
    "color_r",
    "color_g",
    "color_b",
)


def save_scene_ply(path, scene: GaussianScene) -> None:
    n = len(scene)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _SCENE_PROPS]
    header += ["end_header"]
    cols = np.concatenate(
        [scene.means, scene.log_scales, scene.quaternions, scene.opacity_logits[:, None], scene.colors],
        axis=1,
    ).astype("<f4")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(cols).tobytes())


def load_scene_ply(path) -> GaussianScene:
    with open(path, "rb") as f:
        count, props = _parse_ply_header(f)
        names = [name for _, name in props]
        if tuple(names) != _SCENE_PROPS:
            raise ValueError("PLY does not carry gaussian scene properties")
        raw = np.frombuffer(f.read(count * 4 * len(names)), dtype="<f4")
    cols = raw.reshape(count, len(names)).astype(np.float64)
    return GaussianScene(
        means=cols[:, 0:3],
        log_scales=cols[:, 3:6],
        quaternions=cols[:, 6:10],
        opacity_logits=cols[:, 10],
        colors=cols[:, 11:14],
    )


# ---------------------------------------------------------------------------
# PNG images


def save_image_png(path, values: np.ndarray) -> None:
    """Write an H x W x 3 float image in [0, 1] as 8-bit RGB."""
    v = np.asarray(values, dtype=np.float64)
    b = np.clip(np.floor(v * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(b, mode="RGB").save(path)


def load_image_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


# ---------------------------------------------------------------------------
# DPTH depth rasters


def save_depth(path, values: np.ndarray) -> None:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("depth raster must be 2-D")
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(v.astype("<f4").tobytes())


def load_depth(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != DEPTH_MAGIC:
        raise ValueError(f"{path}: missing DPTH magic")
    w, h = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * w * h
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw[12:], dtype="<f4").reshape(h, w).astype(np.float64)
