"""Raster ingestion, tiling, bi-temporal stacking and train/test splits."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import ArgumentError, DataError

BTR_MAGIC = b"BTR1"
BTR_HEADER = struct.Struct("<4sIIII")
BTR_DTYPES = {0: np.dtype("u1"), 1: np.dtype("<f4")}

DEFAULT_TILE_SIZE = 256


@dataclass
class Raster:
    pixels: np.ndarray  # H x W x C
    band_names: list[str]
    scene_id: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise ArgumentError(f"raster pixels must be H x W x C, got shape {self.pixels.shape}")
        h, w, c = self.pixels.shape
        if min(h, w, c) < 1:
            raise ArgumentError(f"raster has an empty dimension: {self.pixels.shape}")
        if len(self.band_names) != c:
            raise ArgumentError(f"{len(self.band_names)} band names for {c} channels")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


@dataclass
class Tile:
    pixels: np.ndarray  # T x T x C
    origin: tuple[int, int]
    tile_id: str


@dataclass
class StackedPair:
    """Early-fusion model input: t1 bands followed by t2 bands."""

    input: np.ndarray  # T x T x 2C
    tile_id: str
    mask: np.ndarray | None = None  # T x T, values in {0, 1}
    t1_date: str = ""
    t2_date: str = ""

    @property
    def channels_per_date(self) -> int:
        return self.input.shape[-1] // 2


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ArgumentError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass
class ManifestRecord:
    tile_id: str
    split: str
    path_t1: str
    path_t2: str
    path_mask: str = ""


# --------------------------------------------------------------------------
# Raw raster format


def write_btr(path, pixels: np.ndarray) -> None:
    """Write an H x W x C array in the raw ``BTR1`` format (u8 or f32)."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    if pixels.dtype == np.uint8:
        code = 0
    else:
        code = 1
        pixels = pixels.astype("<f4")
    h, w, c = pixels.shape
    with open(path, "wb") as fh:
        fh.write(BTR_HEADER.pack(BTR_MAGIC, h, w, c, code))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def read_btr(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < BTR_HEADER.size:
        raise DataError(f"{path}: truncated BTR1 header")
    magic, h, w, c, code = BTR_HEADER.unpack_from(raw)
    if magic != BTR_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if code not in BTR_DTYPES:
        raise DataError(f"{path}: unknown dtype code {code}")
    dtype = BTR_DTYPES[code]
    expected = h * w * c * dtype.itemsize
    body = raw[BTR_HEADER.size:]
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(h, w, c).copy()


def _read_any(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BTR_MAGIC:
        return read_btr(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:  # PIL raises several unrelated types
        raise OSError(f"cannot decode raster {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


# --------------------------------------------------------------------------
# Operations


def load_raster(path, bands: Sequence[int] | None = None, scene_id: str | None = None) -> Raster:
    """Read a stacked-band image and keep ``bands`` in the requested order.

    Accepts the raw ``BTR1`` format or anything Pillow decodes. Pixels are
    returned as float32 in their original value range.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"raster not found: {path}")
    arr = _read_any(path)
    n_bands = arr.shape[2]
    if bands is None:
        bands = list(range(n_bands))
    bands = [int(b) for b in bands]
    if not bands:
        raise ArgumentError("at least one band must be selected")
    bad = [b for b in bands if b < 0 or b >= n_bands]
    if bad:
        raise ArgumentError(f"band indices {bad} out of range for {n_bands}-band raster {path}")
    pixels = arr[:, :, bands].astype(np.float32)
    return Raster(pixels, [f"band{b}" for b in bands], scene_id or path.stem)


def normalize(raster: Raster) -> Raster:
    """Rescale each channel to [0, 1] by its global min and max.

    Constant channels map to 0.
    """
    px = raster.pixels.astype(np.float64)
    if not np.all(np.isfinite(px)):
        raise DataError(f"raster {raster.scene_id!r} contains NaN or Inf pixels")
    lo = px.min(axis=(0, 1), keepdims=True)
    hi = px.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (px - lo) / np.where(span > 0, span, 1.0), 0.0)
    return Raster(out.astype(np.float32), list(raster.band_names), raster.scene_id)


def tile_scene(raster: Raster, tile_size: int = DEFAULT_TILE_SIZE) -> list[Tile]:
    """Cut a non-overlapping row-major grid of tiles; partial edge tiles are dropped."""
    if tile_size < 1:
        raise ArgumentError(f"tile_size must be >= 1, got {tile_size}")
    h, w, _ = raster.shape
    tiles = []
    for r in range(h // tile_size):
        for c in range(w // tile_size):
            y, x = r * tile_size, c * tile_size
            tiles.append(Tile(
                pixels=raster.pixels[y:y + tile_size, x:x + tile_size].copy(),
                origin=(y, x),
                tile_id=f"{raster.scene_id}/{r}_{c}",
            ))
    return tiles


def tile_mask(mask: np.ndarray, tile_size: int, scene_id: str = "") -> list[Tile]:
    """Tile a 2-D mask on the same grid as :func:`tile_scene`."""
    mask = np.asarray(mask)
    return tile_scene(Raster(mask[:, :, None], ["mask"], scene_id), tile_size)


def stack_pair(t1: Tile, t2: Tile, mask: np.ndarray | None = None,
               t1_date: str = "", t2_date: str = "") -> StackedPair:
    if t1.tile_id != t2.tile_id:
        raise ArgumentError(f"tile ids differ: {t1.tile_id!r} vs {t2.tile_id!r}")
    if t1.pixels.shape != t2.pixels.shape:
        raise ArgumentError(f"tile shapes differ: {t1.pixels.shape} vs {t2.pixels.shape}")
    if mask is not None:
        mask = np.asarray(mask)
        if mask.ndim == 3 and mask.shape[2] == 1:
            mask = mask[:, :, 0]
        if mask.shape != t1.pixels.shape[:2]:
            raise ArgumentError(f"mask shape {mask.shape} does not match tile {t1.pixels.shape[:2]}")
        mask = (mask > 0).astype(np.uint8)
    stacked = np.concatenate([t1.pixels, t2.pixels], axis=-1)
    return StackedPair(stacked, t1.tile_id, mask, t1_date, t2_date)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_tiles(tile_ids: Sequence[str], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Seeded random partition; both returned lists keep the input order.

    Pass position keys (e.g. ``rowIdx_colIdx``) to select the same tiles for
    every acquisition year of a scene.
    """
    ids = list(tile_ids)
    if not ids:
        raise ArgumentError("tile_ids must be non-empty")
    if len(set(ids)) != len(ids):
        seen, dup = set(), []
        for t in ids:
            if t in seen:
                dup.append(t)
            seen.add(t)
        raise ArgumentError(f"duplicate tile ids: {sorted(set(dup))[:5]}")
    n_train = round_half_up(spec.train_fraction * len(ids))
    order = np.random.default_rng(spec.seed).permutation(len(ids))
    chosen = set(order[:n_train].tolist())
    train = [t for i, t in enumerate(ids) if i in chosen]
    test = [t for i, t in enumerate(ids) if i not in chosen]
    return train, test


# --------------------------------------------------------------------------
# Masks and manifests


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    Image.fromarray(np.where(mask > 0, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask not found: {path}")
    arr = _read_any(path)
    if arr.shape[2] != 1:
        raise DataError(f"mask {path} has {arr.shape[2]} channels, expected 1")
    arr = arr[:, :, 0]
    threshold = 128 if arr.dtype == np.uint8 else 0.5
    return (arr >= threshold).astype(np.uint8)


def write_manifest(path, records: Iterable[ManifestRecord], header: Sequence[str] = ()) -> None:
    lines = [f"# {h}" for h in header]
    for rec in records:
        lines.append("\t".join([rec.tile_id, rec.split, rec.path_t1, rec.path_t2, rec.path_mask]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 4:
            parts.append("")
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        records.append(ManifestRecord(*parts))
    return records


def load_pair(record: ManifestRecord, base_dir=None, t1_date: str = "", t2_date: str = "") -> StackedPair:
    """Materialise a manifest record as a :class:`StackedPair`."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    a = load_raster(base / record.path_t1)
    b = load_raster(base / record.path_t2)
    mask = read_mask(base / record.path_mask) if record.path_mask else None
    return stack_pair(
        Tile(a.pixels, (0, 0), record.tile_id),
        Tile(b.pixels, (0, 0), record.tile_id),
        mask, t1_date, t2_date,
    )
