"""Linear blendshape decoder from 53-dim parameter frames to vertex positions.

A frame is 50 expression coefficients plus 3 jaw rotations (radians); a
subject is 300 identity shape coefficients.  Decoding is purely linear:

    v = template + shape_basis.T @ shape + expr_basis.T @ expr + jaw_basis.T @ jaw

Jaw rotation is linearized into three displacement basis vectors instead of
skinned rotation, which keeps the decoder linear; predictions and ground
truth always pass through the same decoder, so error metrics keep their
meaning.  Units are millimeters throughout.

``synth_model`` fabricates a deterministic stand-in model: vertices on a
face-like half-ellipsoid, displacement bases with localized support, and
lip / upper-face region masks from the bottom and top thirds of the vertex
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._binio import check_magic, read_f32_block, read_u32, write_f32_block, write_u32
from .errors import ConfigError, InputError, IntegrityError
from .params import init_rng

N_EXPR = 50
N_JAW = 3
N_FRAME = N_EXPR + N_JAW
N_SHAPE = 300

LSFB_MAGIC = b"LSFB"
LSFB_VERSION = 1
LSFS_MAGIC = b"LSFS"
LSFS_VERSION = 1


@dataclass
class BlendshapeModel:
    """Template plus displacement bases, all in mm (per unit coefficient)."""

    template: np.ndarray      # (V, 3)
    shape_basis: np.ndarray   # (300, V, 3)
    expr_basis: np.ndarray    # (50, V, 3)
    jaw_basis: np.ndarray     # (3, V, 3), mm per radian

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    def validate(self) -> None:
        v = self.template.shape[0]
        if v < 1 or self.template.shape != (v, 3):
            raise InputError(f"template must be (V, 3) with V >= 1, got {self.template.shape}")
        expected = {
            "shape_basis": (N_SHAPE, v, 3),
            "expr_basis": (N_EXPR, v, 3),
            "jaw_basis": (N_JAW, v, 3),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise InputError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise InputError(f"{name} contains non-finite values")
        if not np.isfinite(self.template).all():
            raise InputError("template contains non-finite values")


@dataclass
class RegionMask:
    name: str
    vertex_indices: np.ndarray  # sorted unique int64, all < V

    def validate(self, n_vertices: int) -> None:
        idx = self.vertex_indices
        if idx.size == 0:
            raise InputError(f"region mask {self.name!r} is empty")
        if idx.min() < 0 or idx.max() >= n_vertices:
            raise InputError(f"region mask {self.name!r} has out-of-range indices")
        if not np.all(np.diff(idx) > 0):
            raise InputError(f"region mask {self.name!r} must be sorted and unique")


@dataclass
class NeutralShape:
    """300 identity shape coefficients (unitless)."""

    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float32)
        if self.params.shape != (N_SHAPE,):
            raise InputError(f"neutral shape must have exactly {N_SHAPE} params, got {self.params.shape}")
        if not np.isfinite(self.params).all():
            raise InputError("neutral shape contains non-finite values")


def decode_frame(model: BlendshapeModel, shape: NeutralShape, frame: np.ndarray) -> np.ndarray:
    """One 53-dim frame to (V, 3) vertex positions in mm."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (N_FRAME,):
        raise InputError(f"frame must have shape ({N_FRAME},), got {frame.shape}")
    if not np.isfinite(frame).all():
        raise InputError("frame contains non-finite values")
    out = model.template.astype(np.float64).copy()
    out += np.tensordot(shape.params.astype(np.float64), model.shape_basis.astype(np.float64), axes=1)
    out += np.tensordot(frame[:N_EXPR], model.expr_basis.astype(np.float64), axes=1)
    out += np.tensordot(frame[N_EXPR:], model.jaw_basis.astype(np.float64), axes=1)
    return out


def decode_sequence(model: BlendshapeModel, shape: NeutralShape, frames: np.ndarray) -> np.ndarray:
    """(T, 53) parameter frames to a (T, V, 3) vertex sequence."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != N_FRAME:
        raise InputError(f"motion frames must be (T, {N_FRAME}), got {frames.shape}")
    if not np.isfinite(frames).all():
        raise InputError("motion frames contain non-finite values")
    v = model.n_vertices
    if frames.shape[0] == 0:
        return np.zeros((0, v, 3), dtype=np.float64)
    base = model.template.astype(np.float64) + np.tensordot(
        shape.params.astype(np.float64), model.shape_basis.astype(np.float64), axes=1
    )
    out = np.tensordot(frames[:, :N_EXPR], model.expr_basis.astype(np.float64), axes=1)
    out += np.tensordot(frames[:, N_EXPR:], model.jaw_basis.astype(np.float64), axes=1)
    out += base[None, :, :]
    return out


def synth_model(seed: int, n_vertices: int) -> tuple[BlendshapeModel, dict[str, RegionMask]]:
    """Deterministic synthetic blendshape model plus lip/upper-face masks.

    Vertices lie on a half-ellipsoid, ordered bottom (chin) to top (forehead);
    the bottom third of that order is the lip region and the top third the
    upper face.  Expression channels 0..19 get support centered on lip
    vertices, channels 20..49 on upper-face vertices, and the jaw bases on the
    lower face, so mouth-group and upper-face-group parameters move the
    matching regions.  Every expression basis is scaled so one unit of
    coefficient displaces no vertex component by more than 5 mm.
    """
    if n_vertices < 12:
        raise ConfigError(f"synth_model needs at least 12 vertices, got {n_vertices}")
    rng = init_rng(seed)

    # Half-ellipsoid face shell: height y in [-60, 60] mm, width 50, depth 40.
    u = (np.arange(n_vertices) + 0.5) / n_vertices          # bottom -> top
    golden = (1 + 5**0.5) / 2
    phi = 2.0 * np.pi * ((np.arange(n_vertices) * golden) % 1.0) - np.pi
    lat = u * np.pi - np.pi / 2
    template = np.stack(
        [
            50.0 * np.cos(lat) * np.sin(phi / 2.0),
            60.0 * np.sin(lat),
            40.0 * np.cos(lat) * np.cos(phi / 2.0),
        ],
        axis=1,
    ).astype(np.float32)

    third = n_vertices // 3
    lip_idx = np.arange(third, dtype=np.int64)
    upper_idx = np.arange(n_vertices - third, n_vertices, dtype=np.int64)
    masks = {
        "lip": RegionMask("lip", lip_idx),
        "upper_face": RegionMask("upper_face", upper_idx),
    }

    def localized_basis(n_channels: int, centers: np.ndarray, radius_mm: float, max_mm: float) -> np.ndarray:
        basis = np.zeros((n_channels, n_vertices, 3), dtype=np.float32)
        for k in range(n_channels):
            center = template[centers[rng.integers(len(centers))]]
            dist = np.linalg.norm(template - center[None, :], axis=1)
            falloff = np.exp(-0.5 * (dist / radius_mm) ** 2)
            falloff[dist > 2.5 * radius_mm] = 0.0
            direction = rng.standard_normal((n_vertices, 3))
            raw = falloff[:, None] * direction
            # Normalize by the largest per-vertex displacement so one unit of
            # coefficient moves no vertex farther than max_mm (and a fortiori
            # no single component exceeds it).
            peak = np.linalg.norm(raw, axis=1).max()
            amp = max_mm * rng.uniform(0.5, 1.0)
            basis[k] = (raw * (amp / peak)).astype(np.float32)
        return basis

    expr_basis = np.concatenate(
        [
            localized_basis(20, lip_idx, radius_mm=18.0, max_mm=5.0),
            localized_basis(30, upper_idx, radius_mm=18.0, max_mm=5.0),
        ],
        axis=0,
    )
    lower_half = np.arange(n_vertices // 2, dtype=np.int64)
    jaw_basis = localized_basis(3, lower_half, radius_mm=25.0, max_mm=30.0)
    shape_all = np.arange(n_vertices, dtype=np.int64)
    shape_basis = localized_basis(N_SHAPE, shape_all, radius_mm=40.0, max_mm=2.0)

    model = BlendshapeModel(
        template=template,
        shape_basis=shape_basis,
        expr_basis=expr_basis,
        jaw_basis=jaw_basis,
    )
    model.validate()
    return model, masks


def write_model(path, model: BlendshapeModel) -> None:
    model.validate()
    with open(path, "wb") as fh:
        fh.write(LSFB_MAGIC)
        write_u32(fh, LSFB_VERSION)
        write_u32(fh, model.n_vertices)
        write_f32_block(fh, model.template)
        write_f32_block(fh, model.shape_basis)
        write_f32_block(fh, model.expr_basis)
        write_f32_block(fh, model.jaw_basis)


def read_model(path) -> BlendshapeModel:
    path = Path(path)
    with open(path, "rb") as fh:
        check_magic(fh, LSFB_MAGIC, path)
        version = read_u32(fh, "version")
        if version != LSFB_VERSION:
            raise IntegrityError(f"{path}: unsupported LSFB version {version}")
        v = read_u32(fh, "vertex count")
        template = read_f32_block(fh, v * 3, "template").reshape(v, 3)
        shape_basis = read_f32_block(fh, N_SHAPE * v * 3, "shape basis").reshape(N_SHAPE, v, 3)
        expr_basis = read_f32_block(fh, N_EXPR * v * 3, "expr basis").reshape(N_EXPR, v, 3)
        jaw_basis = read_f32_block(fh, N_JAW * v * 3, "jaw basis").reshape(N_JAW, v, 3)
    model = BlendshapeModel(template, shape_basis, expr_basis, jaw_basis)
    model.validate()
    return model


def write_mask(path, mask: RegionMask) -> None:
    payload = {"name": mask.name, "vertex_indices": [int(i) for i in mask.vertex_indices]}
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def read_mask(path) -> RegionMask:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        mask = RegionMask(str(payload["name"]), np.asarray(payload["vertex_indices"], dtype=np.int64))
    except (KeyError, ValueError, TypeError) as exc:
        raise IntegrityError(f"{path}: malformed mask file ({exc})") from exc
    return mask


def write_shape(path, shape: NeutralShape) -> None:
    with open(path, "wb") as fh:
        fh.write(LSFS_MAGIC)
        write_u32(fh, LSFS_VERSION)
        write_f32_block(fh, shape.params)


def read_shape(path) -> NeutralShape:
    path = Path(path)
    with open(path, "rb") as fh:
        check_magic(fh, LSFS_MAGIC, path)
        version = read_u32(fh, "version")
        if version != LSFS_VERSION:
            raise IntegrityError(f"{path}: unsupported LSFS version {version}")
        params = read_f32_block(fh, N_SHAPE, "shape params")
    return NeutralShape(params)
