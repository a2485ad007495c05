"""Synthetic bi-temporal forest scenes with ground-truth clearing masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as fill_polygon

from .errors import ArgumentError
from .imagery import Raster, StackedPair, Tile, stack_pair

RGB = ["red", "green", "blue"]

FOREST_BASE = np.array([0.08, 0.24, 0.07])
FOREST_TEXTURE = np.array([0.07, 0.14, 0.05])
SOIL_BASE = np.array([0.58, 0.46, 0.34])
SOIL_TEXTURE = np.array([0.10, 0.08, 0.06])


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    size: tuple[int, int] = (256, 256)
    n_clearings_t1: int = 2
    n_new_clearings: int = 3
    clearing_radius_range: tuple[float, float] = (10.0, 30.0)
    noise_sigma: float = 0.02

    def __post_init__(self):
        lo, hi = self.clearing_radius_range
        if lo <= 0 or hi < lo:
            raise ArgumentError(f"invalid clearing_radius_range {self.clearing_radius_range}")
        if self.n_clearings_t1 < 0 or self.n_new_clearings < 0:
            raise ArgumentError("clearing counts must be non-negative")
        if self.noise_sigma < 0:
            raise ArgumentError("noise_sigma must be >= 0")


def value_noise(rng: np.random.Generator, shape: tuple[int, int], cell: int = 16) -> np.ndarray:
    """Smooth noise in [0, 1] made by bilinear upsampling of a coarse random grid."""
    h, w = shape
    coarse = rng.random((h // cell + 2, w // cell + 2))
    fine = ndimage.zoom(coarse, cell, order=1, mode="nearest")
    return fine[:h, :w]


def convex_polygon_mask(rng: np.random.Generator, shape: tuple[int, int],
                        radius_range: tuple[float, float]) -> np.ndarray:
    """Rasterised convex polygon: vertices on a randomly rotated ellipse."""
    h, w = shape
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    a = rng.uniform(*radius_range)
    b = a * rng.uniform(0.6, 1.0)
    rot = rng.uniform(0, np.pi)
    n = int(rng.integers(5, 10))
    theta = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    x, y = a * np.cos(theta), b * np.sin(theta)
    rows = cy + x * np.sin(rot) + y * np.cos(rot)
    cols = cx + x * np.cos(rot) - y * np.sin(rot)
    out = np.zeros(shape, dtype=bool)
    rr, cc = fill_polygon(rows, cols, shape)
    out[rr, cc] = True
    return out


def generate_pair(cfg: SynthConfig) -> tuple[Raster, Raster, np.ndarray]:
    """Return ``(t1, t2, mask)`` where mask marks pixels cleared only in t2."""
    h, w = cfg.size
    if h < 1 or w < 1:
        raise ArgumentError(f"synthetic scene size must be positive, got {cfg.size}")
    rng = np.random.default_rng(cfg.seed)

    forest = FOREST_BASE + value_noise(rng, (h, w))[..., None] * FOREST_TEXTURE
    soil = SOIL_BASE + (value_noise(rng, (h, w), cell=8)[..., None] - 0.5) * SOIL_TEXTURE

    cleared_t1 = np.zeros((h, w), dtype=bool)
    for _ in range(cfg.n_clearings_t1):
        cleared_t1 |= convex_polygon_mask(rng, (h, w), cfg.clearing_radius_range)
    cleared_new = np.zeros((h, w), dtype=bool)
    for _ in range(cfg.n_new_clearings):
        cleared_new |= convex_polygon_mask(rng, (h, w), cfg.clearing_radius_range)
    cleared_t2 = cleared_t1 | cleared_new

    clean_t1 = np.where(cleared_t1[..., None], soil, forest)
    clean_t2 = np.where(cleared_t2[..., None], soil, forest)
    noisy = []
    for clean in (clean_t1, clean_t2):
        px = clean + rng.normal(0.0, cfg.noise_sigma, size=clean.shape)
        noisy.append(np.clip(px, 0.0, 1.0).astype(np.float32))

    mask = (cleared_new & ~cleared_t1).astype(np.uint8)
    scene = f"synth{cfg.seed}"
    return Raster(noisy[0], list(RGB), scene), Raster(noisy[1], list(RGB), scene), mask


def synthetic_pairs(n: int, size: int = 64, seed: int = 0, max_pre: int = 2, max_new: int = 3,
                    radius_range: tuple[float, float] = (4.0, 12.0), noise_sigma: float = 0.02,
                    no_change_fraction: float = 0.0) -> list[StackedPair]:
    """``n`` independent single-tile scenes as :class:`StackedPair` objects.

    Clearing counts are drawn per scene; ``no_change_fraction`` of the scenes
    get no new clearings at all.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        scene_seed = int(rng.integers(0, 2**31 - 1))
        n_pre = int(rng.integers(0, max_pre + 1))
        if rng.random() < no_change_fraction:
            n_new = 0
        else:
            n_new = int(rng.integers(1, max_new + 1))
        cfg = SynthConfig(scene_seed, (size, size), n_pre, n_new, radius_range, noise_sigma)
        t1, t2, mask = generate_pair(cfg)
        tid = f"synth/{i}"
        pairs.append(stack_pair(Tile(t1.pixels, (0, 0), tid), Tile(t2.pixels, (0, 0), tid), mask, "t1", "t2"))
    return pairs


_TOPICS = {
    "clearing": ["deforestation", "forest", "amazon", "brazil", "land", "clearing", "logging",
                 "pasture", "cattle", "soybean", "frontier", "roads", "fire", "loss"],
    "climate": ["carbon", "emissions", "climate", "biomass", "drought", "rainfall", "temperature",
                "flux", "atmosphere", "warming"],
    "ecology": ["species", "biodiversity", "conservation", "habitat", "fauna", "primates", "birds",
                "fragmentation", "ecosystem", "richness"],
    "policy": ["policy", "governance", "enforcement", "protected", "areas", "indigenous",
               "territories", "municipalities", "law", "monitoring"],
}
_FILLER = ["study", "results", "analysis", "region", "data", "approach", "effects", "impact",
           "patterns", "period", "model", "estimates"]


def synthetic_corpus(n_docs: int = 60, seed: int = 0, words_per_doc: int = 40) -> list[dict]:
    """Topic-structured toy abstracts as corpus records (doc_id, year, title, abstract).

    Every document mixes a dominant topic with filler words; the "clearing"
    topic carries the words ``deforestation`` and ``forest``.
    """
    rng = np.random.default_rng(seed)
    names = sorted(_TOPICS)
    records = []
    for i in range(n_docs):
        main = names[int(rng.integers(len(names)))]
        other = names[int(rng.integers(len(names)))]
        words = []
        for _ in range(words_per_doc):
            r = rng.random()
            pool = _TOPICS[main] if r < 0.6 else _TOPICS[other] if r < 0.8 else _FILLER
            words.append(pool[int(rng.integers(len(pool)))])
        records.append({
            "doc_id": f"doc{i:04d}",
            "year": 2017 + int(rng.integers(4)),
            "title": f"{main} study {i}",
            "abstract": " ".join(words) + ".",
        })
    return records
