"""Synthetic dataset generation and storage.

Builds the attributed-digit dataset (full and mini configurations) from IDX
digit files or from procedural glyphs, the two-binary-attribute digit dataset,
iid and compositional splits, abstract query banks, and the concept-naming
bank. Also owns the MNA1 dataset file format.

Generation derives a per-example RNG stream from (seed, example index), so
datasets are byte-identical across runs and generation could be parallelized
per example without changing the output.
"""

from __future__ import annotations

import itertools
import json
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionError, FormatError
from .schema import AttributeSchema, PartialAttributeVector, mnista_schema, mnist2bit_schema

DATASET_MAGIC = b"MNA1"

SCALE_RANGE = (0.4, 1.0)
SCALE_PARAMS = {"big": (0.9, 0.1), "small": (0.6, 0.1)}
ROTATION_PARAMS = {"clockwise": (45.0, 10.0), "anticlockwise": (-45.0, 10.0)}
INK_THRESHOLD = 0.1  # pixels above this count as digit content

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}


# ---------------------------------------------------------------------------
# Core containers


@dataclass
class Dataset:
    """Binary images with full attribute vectors and split assignments."""

    schema: AttributeSchema
    images: np.ndarray  # (N, H, W) uint8 in {0, 1}
    attrs: np.ndarray  # (N, K) uint8 category indices
    split: np.ndarray  # (N,) uint8 in {0 train, 1 val, 2 test}
    split_kind: str = "none"  # none | iid | comp
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.images.ndim != 3 or self.attrs.ndim != 2 or self.attrs.shape[0] != self.images.shape[0]:
            raise DimensionError("images (N,H,W) and attrs (N,K) must agree on N")
        if self.attrs.shape[1] != self.schema.n_attributes:
            raise DimensionError("attrs width must match schema")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def image_size(self) -> int:
        return self.images.shape[1]

    def indices(self, split: str) -> np.ndarray:
        """Example indices in a split; 'all' returns everything."""
        if split == "all":
            return np.arange(self.n)
        return np.where(self.split == SPLIT_NAMES[split])[0]

    def concept_ids(self) -> np.ndarray:
        """Each example's concept as a single integer key."""
        key = np.zeros(self.n, dtype=np.int64)
        for card, col in zip(self.schema.cardinalities, self.attrs.T):
            key = key * card + col
        return key


@dataclass(frozen=True)
class TransformParams:
    """Continuous pose for one rendered digit: scale in [0.4, 1.0], rotation
    in degrees (positive = clockwise with rows growing downward), and the
    canvas-pixel (row, col) the glyph center lands on."""

    scale: float
    rotation_deg: float
    center: tuple[float, float]


# ---------------------------------------------------------------------------
# IDX ingestion and procedural glyph fallback


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Parse big-endian IDX image/label files -> (N,H,W) float in [0,1], (N,) labels."""
    with open(images_path, "rb") as f:
        header = f.read(16)
        if len(header) != 16:
            raise FormatError(f"truncated IDX image header at byte {len(header)}")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != 0x00000803:
            raise FormatError(f"bad IDX image magic 0x{magic:08x}, expected 0x00000803")
        raw = f.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise FormatError(f"truncated IDX image data at byte {16 + len(raw)}")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    with open(labels_path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise FormatError(f"truncated IDX label header at byte {len(header)}")
        magic, n_labels = struct.unpack(">II", header)
        if magic != 0x00000801:
            raise FormatError(f"bad IDX label magic 0x{magic:08x}, expected 0x00000801")
        raw = f.read(n_labels)
        if len(raw) != n_labels:
            raise FormatError(f"truncated IDX label data at byte {8 + len(raw)}")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if n != n_labels:
        raise FormatError(f"IDX count mismatch: {n} images vs {n_labels} labels")
    if labels.size and labels.max() > 9:
        raise DataError(f"IDX label out of range: {labels.max()}")
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


_SEGMENTS = {
    # name -> (r0, r1, c0, c1) factory given frame geometry
    "top": lambda t, m, b, l, r, th: (t, t + th - 1, l + 1, r - 1),
    "mid": lambda t, m, b, l, r, th: (m, m + th - 1, l + 1, r - 1),
    "bottom": lambda t, m, b, l, r, th: (b - th + 1, b, l + 1, r - 1),
    "top_left": lambda t, m, b, l, r, th: (t + 1, m, l, l + th - 1),
    "top_right": lambda t, m, b, l, r, th: (t + 1, m, r - th + 1, r),
    "bottom_left": lambda t, m, b, l, r, th: (m, b - 1, l, l + th - 1),
    "bottom_right": lambda t, m, b, l, r, th: (m, b - 1, r - th + 1, r),
}

_DIGIT_SEGMENTS = {
    0: ("top", "top_right", "bottom_right", "bottom", "bottom_left", "top_left"),
    1: ("top_right", "bottom_right"),
    2: ("top", "top_right", "mid", "bottom_left", "bottom"),
    3: ("top", "top_right", "mid", "bottom_right", "bottom"),
    4: ("top_left", "mid", "top_right", "bottom_right"),
    5: ("top", "top_left", "mid", "bottom_right", "bottom"),
    6: ("top", "top_left", "mid", "bottom_left", "bottom", "bottom_right"),
    7: ("top", "top_right", "bottom_right"),
    8: ("top", "mid", "bottom", "top_left", "top_right", "bottom_left", "bottom_right"),
    9: ("top", "top_right", "bottom_right", "bottom", "top_left", "mid"),
}


def procedural_glyphs(size: int) -> list[np.ndarray]:
    """Ten deterministic seven-segment digit bitmaps on a size x size frame.

    Ink is clipped to a disk of radius 0.38 * size around the frame center so
    a rotated glyph's bounding box stays compact; this keeps the location
    rejection rule feasible even on small canvases.
    """
    if size < 8:
        raise DataError(f"glyph size must be >= 8, got {size}")
    margin = max(1, round(size / 8))
    th = max(1, round(size / 8))
    top, bottom = margin, size - 1 - margin
    left, right = margin, size - 1 - margin
    mid = (top + bottom) // 2
    center = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    disk = (yy - center) ** 2 + (xx - center) ** 2 <= (0.38 * size) ** 2
    glyphs = []
    for digit in range(10):
        img = np.zeros((size, size))
        for seg in _DIGIT_SEGMENTS[digit]:
            r0, r1, c0, c1 = _SEGMENTS[seg](top, mid, bottom, left, right, th)
            img[r0 : r1 + 1, c0 : c1 + 1] = 1.0
        img *= disk
        glyphs.append(img)
    return glyphs


def ink_coords(glyph: np.ndarray) -> np.ndarray:
    """(M, 2) offsets of content pixels from the glyph frame center."""
    rows, cols = np.where(glyph > INK_THRESHOLD)
    center = (np.asarray(glyph.shape, dtype=np.float64) - 1.0) / 2.0
    return np.stack([rows, cols], axis=1).astype(np.float64) - center


# ---------------------------------------------------------------------------
# Attribute -> transform sampling


def _rotation_matrix(theta_deg: float) -> np.ndarray:
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    # Acts on (row, col) offsets; positive angles turn clockwise on screen.
    return np.array([[c, s], [-s, c]])


def _halo_projection(a: float, b: float) -> float:
    """Max of a*dx + b*dy over the region where a unit ink pixel's bilinear
    weight (1-dx)(1-dy) can still exceed the ink threshold."""
    a, b = abs(a), abs(b)
    if a < 1e-12:
        return 0.9 * b
    t = min(1.0, max(0.1, np.sqrt(0.1 * b / a)))
    return (1.0 - t) * a + (1.0 - 0.1 / t) * b


_SUBSAMPLE_OFFSETS = (-1.0 / 3.0, 0.0, 1.0 / 3.0)  # 3x3 box filter per pixel


def _content_extents(coords: np.ndarray, scale: float, theta_deg: float) -> tuple[float, float, float, float]:
    """Canvas bbox (rmin, rmax, cmin, cmax) of transformed content relative to
    the placement center, including the halo where interpolation weights can
    exceed the ink threshold (bilinear reach plus the subsample spread)."""
    rot_mat = _rotation_matrix(theta_deg)
    rot = coords @ rot_mat.T * scale
    sub = max(abs(o) for o in _SUBSAMPLE_OFFSETS)
    halo_r = scale * _halo_projection(rot_mat[0, 0], rot_mat[0, 1]) + sub
    halo_c = scale * _halo_projection(rot_mat[1, 0], rot_mat[1, 1]) + sub
    return (
        float(rot[:, 0].min() - halo_r),
        float(rot[:, 0].max() + halo_r),
        float(rot[:, 1].min() - halo_c),
        float(rot[:, 1].max() + halo_c),
    )


def _default_content(image_size: int) -> np.ndarray:
    # Nominal content square covering ~20/64 of the canvas, as corner offsets.
    half = image_size * 20.0 / 64.0 / 2.0
    return np.array([[-half, -half], [-half, half], [half, -half], [half, half]])


def location_distribution(attrs_location: int, image_size: int) -> tuple[np.ndarray, float]:
    """Mean (row, col) and stddev of the center distribution for a quadrant:
    the quadrant center shifted image_size/16 toward its corner, sigma
    image_size/16."""
    offset = image_size / 16.0
    quarter, three_quarter = image_size / 4.0, 3.0 * image_size / 4.0
    base = {
        0: (quarter, quarter),
        1: (quarter, three_quarter),
        2: (three_quarter, quarter),
        3: (three_quarter, three_quarter),
    }[attrs_location]
    sign_r = -1.0 if attrs_location in (0, 1) else 1.0
    sign_c = -1.0 if attrs_location in (0, 2) else 1.0
    mean = np.array([base[0] + sign_r * offset, base[1] + sign_c * offset])
    return mean, offset


_LOCATION_TRIES_PER_POSE = 100


def _sample_scale(attrs_scale: int, rng: np.random.Generator, max_rejects: int) -> float:
    scale_name = mnista_schema().attributes[1][1][attrs_scale]
    mu, sd = SCALE_PARAMS[scale_name]
    for _ in range(max_rejects + 1):
        s = rng.normal(mu, sd)
        if SCALE_RANGE[0] <= s <= SCALE_RANGE[1]:
            return float(s)
    raise DataError(f"scale sampling exceeded {max_rejects} rejections")


def _sample_rotation(attrs_orientation: int, rng: np.random.Generator) -> float:
    orient_name = mnista_schema().attributes[2][1][attrs_orientation]
    if orient_name == "upright":
        return 0.0
    rmu, rsd = ROTATION_PARAMS[orient_name]
    return float(rng.normal(rmu, rsd))


def attrs_to_transform(
    attrs,
    rng: np.random.Generator,
    image_size: int,
    content: np.ndarray | None = None,
    max_rejects: int = 1000,
) -> TransformParams:
    """Sample continuous pose parameters for one full attribute vector.

    Scale is redrawn until it lands in [0.4, 1.0]; the center is redrawn until
    the transformed digit content stays inside the canvas. Normally only the
    offending component is resampled, but if a scale/rotation draw leaves the
    location constraint nearly unsatisfiable, the whole pose is refreshed
    after a bounded number of location draws. More than `max_rejects` draws of
    any one component raises (degenerate configuration).

    Centers are continuous canvas coordinates in [0, image_size]; pixel (r, c)
    sits at (r + 0.5, c + 0.5).
    """
    attrs = tuple(int(a) for a in attrs)
    if len(attrs) != 4:
        raise DimensionError(f"need a full 4-attribute vector, got {attrs}")
    if content is None:
        content = _default_content(image_size)

    mean, sigma = location_distribution(attrs[3], image_size)
    location_draws = 0
    while location_draws <= max_rejects:
        scale = _sample_scale(attrs[1], rng, max_rejects)
        rotation = _sample_rotation(attrs[2], rng)
        rmin, rmax, cmin, cmax = _content_extents(content, scale, rotation)
        tries = min(_LOCATION_TRIES_PER_POSE, max_rejects - location_draws + 1)
        for _ in range(tries):
            location_draws += 1
            c = rng.normal(mean, sigma)
            if (
                c[0] + rmin >= 0.5
                and c[0] + rmax <= image_size - 0.5
                and c[1] + cmin >= 0.5
                and c[1] + cmax <= image_size - 0.5
            ):
                return TransformParams(scale=scale, rotation_deg=rotation, center=(float(c[0]), float(c[1])))
    raise DataError(f"location sampling exceeded {max_rejects} rejections (content too large for canvas)")


# ---------------------------------------------------------------------------
# Rendering and binarization


def _bilinear(g: np.ndarray, gr: np.ndarray, gc: np.ndarray) -> np.ndarray:
    gh, gw = g.shape
    r0 = np.floor(gr).astype(np.int64)
    c0 = np.floor(gc).astype(np.int64)
    fr = gr - r0
    fc = gc - c0
    out = np.zeros_like(gr)
    for dr_i, dc_i, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr_i
        cc = c0 + dc_i
        valid = (rr >= 0) & (rr < gh) & (cc >= 0) & (cc < gw)
        out += w * np.where(valid, g[np.clip(rr, 0, gh - 1), np.clip(cc, 0, gw - 1)], 0.0)
    return out


def render(glyph: np.ndarray, t: TransformParams, canvas_size: int) -> np.ndarray:
    """Rotate, scale, and translate the glyph onto an empty canvas.

    Composition is rotate-then-scale about the glyph center, then translate
    the center to t.center. Sampling is bilinear with zero padding, box
    filtered over a 3x3 subpixel grid so downscaled strokes keep their mass
    instead of aliasing away. Raises if any content (pixel > 0.1) would land
    outside the canvas; the upstream rejection rule is meant to prevent that.
    """
    g = np.asarray(glyph, dtype=np.float64)
    gh, gw = g.shape
    pad = int(np.ceil(0.5 * np.hypot(gh, gw) * t.scale)) + 2
    size = canvas_size + 2 * pad
    cy, cx = t.center[0] + pad, t.center[1] + pad
    # pixel (r, c) sits at continuous coordinates (r + 0.5, c + 0.5)
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    inv = _rotation_matrix(-t.rotation_deg)
    out = np.zeros((size, size))
    for dr_s in _SUBSAMPLE_OFFSETS:
        for dc_s in _SUBSAMPLE_OFFSETS:
            dr = (rows + dr_s - cy) / t.scale
            dc = (cols + dc_s - cx) / t.scale
            gr = inv[0, 0] * dr + inv[0, 1] * dc + (gh - 1) / 2.0
            gc = inv[1, 0] * dr + inv[1, 1] * dc + (gw - 1) / 2.0
            out += _bilinear(g, gr, gc)
    out /= len(_SUBSAMPLE_OFFSETS) ** 2

    content = out > INK_THRESHOLD
    inside = np.zeros_like(content)
    inside[pad : pad + canvas_size, pad : pad + canvas_size] = True
    if np.any(content & ~inside):
        raise DataError("transform places glyph content outside the canvas")
    return np.clip(out[pad : pad + canvas_size, pad : pad + canvas_size], 0.0, 1.0)


def binarize(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw each pixel Bernoulli(p = intensity) -> uint8 image in {0, 1}."""
    img = np.asarray(img, dtype=np.float64)
    if img.min() < 0.0 or img.max() > 1.0:
        raise DataError(f"pixel intensities outside [0, 1]: [{img.min()}, {img.max()}]")
    return (rng.random(img.shape) < img).astype(np.uint8)


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass
class GenConfig:
    source: str = "procedural"  # procedural | idx
    image_size: int = 16
    per_concept: int | None = 20  # examples per concept (concept-major order)
    per_source: int | None = None  # attribute draws per source image
    seed: int = 0
    idx_images: str | None = None
    idx_labels: str | None = None
    glyph_size: int | None = None  # procedural frame; default tracks canvas size

    def resolved_glyph_size(self) -> int:
        if self.glyph_size is not None:
            return self.glyph_size
        return max(8, round(self.image_size * 28 / 64))


def _example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def generate_mnista(config: GenConfig) -> Dataset:
    """Generate the attributed-digit dataset.

    per_concept mode walks every concept in order and renders that many
    examples each (the mini configuration); per_source mode samples that many
    uniform attribute vectors per source image, keeping the class attribute
    consistent with the source digit's label.
    """
    schema = mnista_schema()
    if (config.per_concept is None) == (config.per_source is None):
        raise DataError("set exactly one of per_concept / per_source")
    if config.source == "procedural":
        sources = procedural_glyphs(config.resolved_glyph_size())
        labels = np.arange(10)
    elif config.source == "idx":
        if not config.idx_images or not config.idx_labels:
            raise DataError("idx source needs idx_images and idx_labels paths")
        images, labels = load_idx(config.idx_images, config.idx_labels)
        sources = list(images)
    else:
        raise DataError(f"unknown source {config.source!r}")

    contents = [ink_coords(s) for s in sources]
    by_class: list[np.ndarray] = [np.where(labels == k)[0] for k in range(10)]
    if config.per_concept is not None and any(len(b) == 0 for b in by_class):
        raise DataError("per_concept mode needs at least one source image per class")

    n_attr = schema.n_attributes
    cards = schema.cardinalities
    plan_attrs: list[tuple[int, ...]] = []
    plan_source: list[int | None] = []  # None = choose from class pool with example rng
    if config.per_concept is not None:
        for concept in schema.all_concepts():
            for _ in range(config.per_concept):
                plan_attrs.append(concept)
                plan_source.append(None)
    else:
        for si in range(len(sources)):
            for _ in range(config.per_source):
                plan_attrs.append((int(labels[si]),))  # remaining attrs drawn per example
                plan_source.append(si)

    n = len(plan_attrs)
    size = config.image_size
    out_images = np.zeros((n, size, size), dtype=np.uint8)
    out_attrs = np.zeros((n, n_attr), dtype=np.uint8)
    for idx in range(n):
        rng = _example_rng(config.seed, idx)
        if plan_source[idx] is None:
            attrs = plan_attrs[idx]
            pool = by_class[attrs[0]]
            si = int(pool[rng.integers(0, len(pool))])
        else:
            si = plan_source[idx]
            klass = plan_attrs[idx][0]
            attrs = (klass,) + tuple(int(rng.integers(0, cards[k])) for k in range(1, n_attr))
        t = attrs_to_transform(attrs, rng, size, content=contents[si])
        canvas = render(sources[si], t, size)
        out_images[idx] = binarize(canvas, rng)
        out_attrs[idx] = attrs

    manifest = {
        "generator": "mnista",
        "seed": config.seed,
        "source": config.source,
        "image_size": size,
        "per_concept": config.per_concept,
        "per_source": config.per_source,
        "glyph_size": config.resolved_glyph_size() if config.source == "procedural" else None,
        "interpolation": "bilinear",
    }
    return Dataset(schema, out_images, out_attrs, np.zeros(n, dtype=np.uint8), "none", manifest)


def make_mnist2bit(images: np.ndarray, labels: np.ndarray, rng: np.random.Generator, copies: int = 1) -> Dataset:
    """Digit images with two derived binary attributes: parity (even/odd) and
    magnitude (label < 5 vs >= 5). Images are binarized but not transformed."""
    schema = mnist2bit_schema()
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = images.shape[0] * copies
    out_images = np.zeros((n, images.shape[1], images.shape[2]), dtype=np.uint8)
    out_attrs = np.zeros((n, 2), dtype=np.uint8)
    for idx in range(n):
        src = idx % images.shape[0]
        out_images[idx] = binarize(images[src], rng)
        label = int(labels[src])
        out_attrs[idx] = (label % 2, int(label >= 5))
    manifest = {"generator": "mnist2bit", "copies": copies}
    return Dataset(schema, out_images, out_attrs, np.zeros(n, dtype=np.uint8), "none", manifest)


# ---------------------------------------------------------------------------
# Splits


def make_iid_split(d: Dataset, rng: np.random.Generator) -> Dataset:
    """Random image-level 85/5/10 partition."""
    n = d.n
    n_train = int(n * 0.85)
    n_val = int(n * 0.05)
    perm = rng.permutation(n)
    split = np.full(n, SPLIT_TEST, dtype=np.uint8)
    split[perm[:n_train]] = SPLIT_TRAIN
    split[perm[n_train : n_train + n_val]] = SPLIT_VAL
    return replace(d, split=split, split_kind="iid")


def make_comp_split(d: Dataset, rng: np.random.Generator) -> Dataset:
    """Concept-level partition (204/12/24 for the 240-concept schema); every
    example follows its concept, so the three concept sets are disjoint."""
    n_concepts = d.schema.concept_count
    present = np.unique(d.concept_ids())
    if present.size < n_concepts:
        raise DataError(f"dataset covers {present.size} of {n_concepts} concepts; compositional split needs all")
    n_train = int(n_concepts * 0.85)
    n_val = int(n_concepts * 0.05)
    perm = rng.permutation(n_concepts)
    concept_split = np.full(n_concepts, SPLIT_TEST, dtype=np.uint8)
    concept_split[perm[:n_train]] = SPLIT_TRAIN
    concept_split[perm[n_train : n_train + n_val]] = SPLIT_VAL
    split = concept_split[d.concept_ids()]
    return replace(d, split=split, split_kind="comp")


def concept_split_sets(d: Dataset) -> dict[str, list[tuple[int, ...]]]:
    """Concrete concepts per split of a compositionally split dataset."""
    if d.split_kind != "comp":
        raise DataError("concept_split_sets needs a compositional split")
    out: dict[str, list[tuple[int, ...]]] = {"train": [], "val": [], "test": []}
    ids = d.concept_ids()
    for name, code in SPLIT_NAMES.items():
        seen = np.unique(ids[d.split == code])
        for cid in seen:
            values = []
            rest = int(cid)
            for card in reversed(d.schema.cardinalities):
                values.append(rest % card)
                rest //= card
            out[name].append(tuple(reversed(values)))
    return out


# ---------------------------------------------------------------------------
# Query banks


def make_abstract_queries(
    schema: AttributeSchema,
    level: int,
    rng: np.random.Generator,
    variants_per_concept: int = 2,
) -> list[PartialAttributeVector]:
    """Per concept, `variants_per_concept` queries with `level` randomly
    dropped attributes (distinct drop patterns within a concept)."""
    k = schema.n_attributes
    if not 1 <= level < k:
        raise DataError(f"abstraction level must be in [1, {k - 1}], got {level}")
    queries = []
    for concept in schema.all_concepts():
        seen: set[tuple[int, ...]] = set()
        while len(seen) < variants_per_concept:
            drop = tuple(sorted(int(i) for i in rng.choice(k, size=level, replace=False)))
            if drop in seen:
                continue
            seen.add(drop)
            keep = tuple(i for i in range(k) if i not in drop)
            queries.append(PartialAttributeVector.full(concept).restrict(keep))
    return queries


@dataclass
class NamingQuery:
    truth_index: int  # index into NamingBank.candidates
    image_indices: np.ndarray  # (n_images,) indices into the source dataset
    images: np.ndarray  # (n_images, H, W) uint8


@dataclass
class NamingBank:
    """Candidate names plus query splits for the concept-naming task."""

    schema: AttributeSchema
    candidates: list[PartialAttributeVector]
    query_splits: list[list[NamingQuery]]
    n_skipped: int = 0

    def distinct_candidates(self) -> list[PartialAttributeVector]:
        seen = {}
        for c in self.candidates:
            seen.setdefault(c.values, c)
        return list(seen.values())


def missingness_patterns(n_attributes: int) -> list[tuple[int, ...]]:
    """All 2^K - 1 non-empty observed-attribute subsets, smallest first."""
    return [combo for r in range(1, n_attributes + 1) for combo in itertools.combinations(range(n_attributes), r)]


def build_naming_bank(
    d: Dataset,
    rng: np.random.Generator,
    split: str = "test",
    patterns_per_concept: int = 4,
    images_per_query: int = 5,
    queries_per_split: int = 100,
    n_splits: int = 3,
) -> NamingBank:
    """Sample the candidate-name bank (patterns_per_concept distinct
    missingness patterns per concept, uniform over the 2^K - 1 non-empty
    ones) and disjoint query splits whose image sets match each ground-truth
    name's observed attributes.

    Candidates with fewer than images_per_query consistent images in the
    chosen split are skipped (with a warning) when drawing queries.
    """
    schema = d.schema
    patterns = missingness_patterns(schema.n_attributes)
    candidates: list[PartialAttributeVector] = []
    for concept in schema.all_concepts():
        chosen = rng.choice(len(patterns), size=patterns_per_concept, replace=False)
        for pi in sorted(int(i) for i in chosen):
            candidates.append(PartialAttributeVector.full(concept).restrict(patterns[pi]))

    pool = d.indices(split)
    pool_attrs = d.attrs[pool]
    match_cache: dict[tuple, np.ndarray] = {}

    def matches(cand: PartialAttributeVector) -> np.ndarray:
        key = cand.values
        if key not in match_cache:
            ok = np.ones(len(pool), dtype=bool)
            for i, v in enumerate(cand.values):
                if v is not None:
                    ok &= pool_attrs[:, i] == v
            match_cache[key] = pool[ok]
        return match_cache[key]

    eligible = [i for i, c in enumerate(candidates) if len(matches(c)) >= images_per_query]
    n_skipped = len(candidates) - len(eligible)
    if n_skipped:
        warnings.warn(f"naming bank: skipped {n_skipped} candidates with fewer than {images_per_query} eval images")
    needed = queries_per_split * n_splits
    if len(eligible) < needed:
        raise DataError(f"only {len(eligible)} eligible candidates for {needed} queries; eval split too small")
    chosen = rng.choice(len(eligible), size=needed, replace=False)
    query_splits: list[list[NamingQuery]] = []
    for s in range(n_splits):
        queries = []
        for j in chosen[s * queries_per_split : (s + 1) * queries_per_split]:
            ci = eligible[int(j)]
            ids = matches(candidates[ci])
            picked = ids[rng.choice(len(ids), size=images_per_query, replace=False)]
            queries.append(NamingQuery(ci, picked, d.images[picked]))
        query_splits.append(queries)
    return NamingBank(schema, candidates, query_splits, n_skipped)


# ---------------------------------------------------------------------------
# Dataset file format: magic MNA1, u8 version, u16 H, u16 W, u8 attr count,
# cardinalities, u32 example count, then per example u8 split, attr values,
# H*W bytes in {0,1}. Integers little-endian. Sidecar JSON manifest at
# <path>.json records schema names, seed, and generator options.


def write_dataset(d: Dataset, path) -> None:
    path = str(path)
    if not np.isin(d.images, (0, 1)).all():
        raise DataError("dataset images must be binary")
    h, w = d.images.shape[1:]
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<B", 1))
        f.write(struct.pack("<HH", h, w))
        f.write(struct.pack("<B", d.schema.n_attributes))
        f.write(bytes(d.schema.cardinalities))
        f.write(struct.pack("<I", d.n))
        if d.n:
            body = np.concatenate(
                [
                    d.split.reshape(-1, 1),
                    d.attrs,
                    d.images.reshape(d.n, -1),
                ],
                axis=1,
            ).astype(np.uint8)
            f.write(body.tobytes(order="C"))
    sidecar = {
        "schema": d.schema.to_dict(),
        "split_kind": d.split_kind,
        "manifest": d.manifest,
    }
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True, indent=1)
        f.write("\n")


def read_dataset(path) -> Dataset:
    path = str(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != DATASET_MAGIC:
            raise FormatError(f"bad dataset magic {magic!r}, expected {DATASET_MAGIC!r}")
        header = f.read(6)
        if len(header) != 6:
            raise FormatError("truncated dataset header")
        version, h, w, n_attr = struct.unpack("<BHHB", header)
        if version != 1:
            raise FormatError(f"unsupported dataset version {version}")
        cards = f.read(n_attr)
        if len(cards) != n_attr:
            raise FormatError("truncated cardinality list")
        count_raw = f.read(4)
        if len(count_raw) != 4:
            raise FormatError("truncated example count")
        (count,) = struct.unpack("<I", count_raw)
        rec = 1 + n_attr + h * w
        raw = f.read(rec * count)
        if len(raw) != rec * count:
            raise FormatError(f"truncated dataset body: wanted {rec * count} bytes, got {len(raw)}")
        body = np.frombuffer(raw, dtype=np.uint8).reshape(count, rec)
    split = body[:, 0].copy()
    attrs = body[:, 1 : 1 + n_attr].copy()
    images = body[:, 1 + n_attr :].reshape(count, h, w).copy()
    if not np.isin(images, (0, 1)).all():
        raise FormatError("dataset pixels must be 0/1")

    schema = None
    split_kind = "none"
    manifest: dict = {}
    try:
        with open(path + ".json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        schema = AttributeSchema.from_dict(sidecar["schema"])
        split_kind = sidecar.get("split_kind", "none")
        manifest = sidecar.get("manifest", {})
    except FileNotFoundError:
        warnings.warn(f"no manifest next to {path}; using generic attribute names")
        schema = AttributeSchema(tuple((f"attr{i}", tuple(str(j) for j in range(c))) for i, c in enumerate(cards)))
    if schema.cardinalities != tuple(cards):
        raise FormatError("manifest schema disagrees with dataset cardinalities")
    for i, c in enumerate(cards):
        if attrs[:, i].size and attrs[:, i].max() >= c:
            raise FormatError(f"attribute {i} has value {attrs[:, i].max()} >= cardinality {c}")
    return Dataset(schema, images, attrs, split, split_kind, manifest)


def train_marginals(d: Dataset) -> list[np.ndarray]:
    """Per-attribute categorical distribution over the training split."""
    idx = d.indices("train")
    if idx.size == 0:
        idx = np.arange(d.n)
    out = []
    for i, card in enumerate(d.schema.cardinalities):
        counts = np.bincount(d.attrs[idx, i], minlength=card).astype(np.float64)
        out.append(counts / counts.sum())
    return out
