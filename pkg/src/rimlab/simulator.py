"""Synthetic QSM lesion generator.

Shells stand in for rim+ lesions and solid spheres for rim- lesions.
Each lesion lives in its own 36x36x12 patch (1x1x3 mm voxels in paper
mode) on top of a smooth gradient-noise background, with optional
partial rims, oval axes, vein intersections, and Gaussian noise.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rvol
from .core import Mask3D, Volume3D

PAPER_DIMS = (36, 36, 12)
PAPER_SPACING = (1.0, 1.0, 3.0)

RADIUS_RANGE = (7.0, 15.0)
THICKNESS_RANGE = (1.0, 3.0)
RIM_VALUE_RANGE = (15.0, 45.0)
CORE_VALUE_RANGE = (-30.0, 0.0)
NOISE_SIGMA_RANGE = (0.0, 7.0)


class LesionFitError(ValueError):
    """Lesion does not fit inside the patch."""


class DegenerateShellError(ValueError):
    """Shell thickness >= radius leaves no core."""


@dataclass(frozen=True)
class VeinSpec:
    """Finite cylinder crossing the lesion center; overwrites intensities only."""

    direction: tuple[float, float, float]
    radius: float = 1.0
    value: float = 35.0


@dataclass(frozen=True)
class LesionSpec:
    kind: str  # "shell" | "sphere"
    radius: float
    rim_value: float
    core_value: float
    thickness: float = 0.0  # shell only
    partial_fraction: float = 1.0  # fraction of solid angle covered by the rim
    partial_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    oval_axes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    vein: VeinSpec | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def validate(self, paper_mode: bool = True) -> None:
        if self.kind not in ("shell", "sphere"):
            raise ValueError(f"kind must be shell or sphere, got {self.kind!r}")
        if not 0.0 < self.partial_fraction <= 1.0:
            raise ValueError("partial_fraction must be in (0, 1]")
        if any(a <= 0 for a in self.oval_axes):
            raise ValueError("oval_axes must be positive")
        if self.kind == "shell" and self.thickness >= self.radius:
            raise DegenerateShellError(
                f"thickness {self.thickness} >= radius {self.radius}"
            )
        if paper_mode:
            checks = [
                ("radius", self.radius, RADIUS_RANGE),
                ("rim_value", self.rim_value, RIM_VALUE_RANGE),
                ("core_value", self.core_value, CORE_VALUE_RANGE),
                ("noise_sigma", self.noise_sigma, NOISE_SIGMA_RANGE),
            ]
            if self.kind == "shell":
                checks.append(("thickness", self.thickness, THICKNESS_RANGE))
            for name, value, (lo, hi) in checks:
                if not lo <= value <= hi:
                    raise ValueError(
                        f"{name}={value} outside paper-mode range [{lo}, {hi}]"
                    )


@dataclass(frozen=True)
class LesionPatch:
    volume: Volume3D
    lesion_mask: Mask3D
    gt_rim_mask: Mask3D | None
    label: str  # "rim+" | "rim-"
    spec: LesionSpec


def _fade(t: np.ndarray) -> np.ndarray:
    # Perlin quintic smoothstep
    return t * t * t * (t * (t * 6 - 15) + 10)


def generate_background(
    dims=PAPER_DIMS,
    spacing=PAPER_SPACING,
    seed: int = 0,
    amplitude: float = 10.0,
    cell_size_mm: float = 12.0,
) -> Volume3D:
    """Smooth simplex-style lattice gradient noise, scaled to +-amplitude ppb."""
    nx, ny, nz = dims
    if min(dims) < 1:
        raise ValueError(f"dims must be positive, got {dims}")
    if amplitude == 0.0:
        return Volume3D(data=np.zeros(dims), spacing=spacing)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xB6)))
    # physical voxel-center coordinates in lattice cells
    coords = np.meshgrid(
        np.arange(nx) * spacing[0] / cell_size_mm,
        np.arange(ny) * spacing[1] / cell_size_mm,
        np.arange(nz) * spacing[2] / cell_size_mm,
        indexing="ij",
    )
    i0 = [np.floor(c).astype(np.int64) for c in coords]
    frac = [c - f for c, f in zip(coords, i0)]
    n_cells = [int(c.max()) + 2 for c in i0]

    grads = rng.normal(size=(n_cells[0], n_cells[1], n_cells[2], 3))
    grads /= np.linalg.norm(grads, axis=-1, keepdims=True)

    u, v, w = (_fade(f) for f in frac)
    out = np.zeros(dims)
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                g = grads[i0[0] + cx, i0[1] + cy, i0[2] + cz]
                dot = (
                    g[..., 0] * (frac[0] - cx)
                    + g[..., 1] * (frac[1] - cy)
                    + g[..., 2] * (frac[2] - cz)
                )
                wx = u if cx else 1 - u
                wy = v if cy else 1 - v
                wz = w if cz else 1 - w
                out += wx * wy * wz * dot
    peak = np.abs(out).max()
    if peak > 0:
        out *= amplitude / peak
    return Volume3D(data=out, spacing=spacing)


def _radial_field(dims, spacing, oval_axes):
    """Ellipsoid-normalized radius of every voxel center from the patch center."""
    axes = [np.arange(n) * s for n, s in zip(dims, spacing)]
    center = [(n - 1) * s / 2.0 for n, s in zip(dims, spacing)]
    rel = np.meshgrid(
        (axes[0] - center[0]) / oval_axes[0],
        (axes[1] - center[1]) / oval_axes[1],
        (axes[2] - center[2]) / oval_axes[2],
        indexing="ij",
    )
    r = np.sqrt(rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2)
    return r, center


def generate_lesion(
    spec: LesionSpec,
    dims=PAPER_DIMS,
    spacing=PAPER_SPACING,
    background_amplitude: float = 10.0,
    paper_mode: bool = True,
) -> LesionPatch:
    """Render one lesion patch. Geometry depends only on the spec fields;
    the seed drives background and noise."""
    spec.validate(paper_mode=paper_mode)
    for axis in range(3):
        extent = dims[axis] * spacing[axis] / 2.0
        if spec.oval_axes[axis] * spec.radius > extent:
            raise LesionFitError(
                f"scaled radius {spec.oval_axes[axis] * spec.radius:.2f} exceeds "
                f"half patch extent {extent:.2f} on axis {axis}"
            )

    r, center = _radial_field(dims, spacing, spec.oval_axes)
    lesion = r <= spec.radius

    gt_rim = None
    if spec.kind == "shell":
        rim = lesion & (r >= spec.radius - spec.thickness)
        if spec.partial_fraction < 1.0:
            u = np.asarray(spec.partial_axis, dtype=float)
            u /= np.linalg.norm(u)
            axes = [np.arange(n) * s - c for n, s, c in zip(dims, spacing, center)]
            rel = np.meshgrid(*axes, indexing="ij")
            norm = np.sqrt(rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2)
            norm[norm == 0] = 1.0
            cos_angle = (rel[0] * u[0] + rel[1] * u[1] + rel[2] * u[2]) / norm
            # spherical cap covering partial_fraction of the solid angle
            rim &= cos_angle >= 1.0 - 2.0 * spec.partial_fraction
        gt_rim = rim

    seq = np.random.SeedSequence(int(spec.seed))
    bg_seed, noise_seed = seq.generate_state(2)
    background = generate_background(
        dims, spacing, seed=int(bg_seed), amplitude=background_amplitude
    )

    vol = background.data.copy()
    vol[lesion] = spec.core_value
    if gt_rim is not None:
        vol[gt_rim] = spec.rim_value

    if spec.vein is not None:
        v = np.asarray(spec.vein.direction, dtype=float)
        v /= np.linalg.norm(v)
        axes = [np.arange(n) * s - c for n, s, c in zip(dims, spacing, center)]
        rel = np.meshgrid(*axes, indexing="ij")
        proj = rel[0] * v[0] + rel[1] * v[1] + rel[2] * v[2]
        perp2 = (
            (rel[0] - proj * v[0]) ** 2
            + (rel[1] - proj * v[1]) ** 2
            + (rel[2] - proj * v[2]) ** 2
        )
        half_len = float(np.hypot.reduce([n * s for n, s in zip(dims, spacing)]))
        vein_mask = (perp2 <= spec.vein.radius**2) & (np.abs(proj) <= half_len)
        vol[vein_mask] = spec.vein.value

    if spec.noise_sigma > 0:
        noise_rng = np.random.default_rng(int(noise_seed))
        vol = vol + noise_rng.normal(0.0, spec.noise_sigma, size=dims)

    return LesionPatch(
        volume=Volume3D(data=vol, spacing=spacing),
        lesion_mask=Mask3D(data=lesion, spacing=spacing),
        gt_rim_mask=Mask3D(data=gt_rim, spacing=spacing) if gt_rim is not None else None,
        label="rim+" if spec.kind == "shell" else "rim-",
        spec=spec,
    )


@dataclass
class SimConfig:
    n_rim_plus: int = 840
    n_rim_minus: int = 168
    seed: int = 42
    dims: tuple[int, int, int] = PAPER_DIMS
    spacing: tuple[float, float, float] = PAPER_SPACING
    radius_range: tuple[float, float] = RADIUS_RANGE
    thickness_range: tuple[float, float] = THICKNESS_RANGE
    rim_value_range: tuple[float, float] = RIM_VALUE_RANGE
    core_value_range: tuple[float, float] = CORE_VALUE_RANGE
    noise_sigmas: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
    p_partial: float = 0.25
    p_oval: float = 0.25
    p_vein: float = 0.25
    partial_fraction_range: tuple[float, float] = (0.03, 0.3)
    oval_axis_range: tuple[float, float] = (0.8, 1.2)
    vein_value_range: tuple[float, float] = (25.0, 45.0)
    vein_radius: float = 2.0
    background_amplitude: float = 10.0
    mode: str = "paper"


@dataclass
class ManifestEntry:
    lesion_id: str
    path: str
    label: str
    seed: int
    spec: LesionSpec


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    seed: int
    mode: str

    def to_json(self) -> str:
        def spec_dict(spec: LesionSpec):
            d = dataclasses.asdict(spec)
            if d["vein"] is None:
                del d["vein"]
            return d

        doc = {
            "seed": self.seed,
            "mode": self.mode,
            "lesions": [
                {
                    "id": e.lesion_id,
                    "path": e.path,
                    "label": e.label,
                    "seed": e.seed,
                    "spec": spec_dict(e.spec),
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        entries = []
        for rec in doc["lesions"]:
            spec_doc = dict(rec["spec"])
            vein = spec_doc.pop("vein", None)
            if vein is not None:
                vein = VeinSpec(
                    direction=tuple(vein["direction"]),
                    radius=vein["radius"],
                    value=vein["value"],
                )
            for key in ("partial_axis", "oval_axes"):
                spec_doc[key] = tuple(spec_doc[key])
            spec = LesionSpec(vein=vein, **spec_doc)
            entries.append(
                ManifestEntry(
                    lesion_id=rec["id"],
                    path=rec["path"],
                    label=rec["label"],
                    seed=rec["seed"],
                    spec=spec,
                )
            )
        return cls(entries=entries, seed=doc["seed"], mode=doc["mode"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def _unit_vector(rng) -> tuple[float, float, float]:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return tuple(float(x) for x in v)


def draw_lesion_spec(config: SimConfig, kind: str, lesion_index: int) -> LesionSpec:
    """Draw one lesion's parameters; independent of execution order.

    Noise sigma cycles deterministically through config.noise_sigmas and
    the geometry stream is keyed to the lesion's group
    (index // len(noise_sigmas)), so consecutive lesions render the same
    geometry once per noise level and per-sigma bins stay comparable.
    Background and noise realizations still differ per lesion.
    """
    n_sigma = len(config.noise_sigmas)
    group = lesion_index // n_sigma
    seq = np.random.SeedSequence(entropy=(int(config.seed), int(group)))
    rng = np.random.default_rng(seq)
    lesion_seed = int(
        np.random.SeedSequence(entropy=(int(config.seed), int(lesion_index), 0xA7))
        .generate_state(1, dtype=np.uint64)[0]
        & 0x7FFFFFFFFFFFFFFF
    )

    radius = rng.uniform(*config.radius_range)
    thickness = rng.uniform(*config.thickness_range)
    rim_value = rng.uniform(*config.rim_value_range)
    core_value = rng.uniform(*config.core_value_range)
    sigma = float(config.noise_sigmas[lesion_index % n_sigma])

    partial_fraction = 1.0
    partial_axis = (1.0, 0.0, 0.0)
    oval_axes = (1.0, 1.0, 1.0)
    vein = None
    if kind == "shell":
        if rng.random() < config.p_partial:
            partial_fraction = float(rng.uniform(*config.partial_fraction_range))
            partial_axis = _unit_vector(rng)
        if rng.random() < config.p_oval:
            oval_axes = tuple(
                float(rng.uniform(*config.oval_axis_range)) for _ in range(3)
            )
        if rng.random() < config.p_vein:
            vein = VeinSpec(
                direction=_unit_vector(rng),
                radius=config.vein_radius,
                value=float(rng.uniform(*config.vein_value_range)),
            )
    return LesionSpec(
        kind=kind,
        radius=float(radius),
        thickness=float(thickness) if kind == "shell" else 0.0,
        rim_value=float(rim_value),
        core_value=float(core_value),
        partial_fraction=partial_fraction,
        partial_axis=partial_axis,
        oval_axes=oval_axes,
        vein=vein,
        noise_sigma=sigma,
        seed=lesion_seed,
    )


def generate_dataset(config: SimConfig, out_dir) -> DatasetManifest:
    """Write RVOL patches (volume, lesion mask, ground-truth rim mask for
    shells) plus a JSON manifest; byte-identical across reruns at a seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    total = config.n_rim_plus + config.n_rim_minus
    for i in range(total):
        kind = "shell" if i < config.n_rim_plus else "sphere"
        spec = draw_lesion_spec(config, kind, i)
        patch = generate_lesion(
            spec,
            dims=config.dims,
            spacing=config.spacing,
            background_amplitude=config.background_amplitude,
            paper_mode=(config.mode == "paper"),
        )
        lesion_id = f"lesion_{i:05d}"
        vol_path = out_dir / f"{lesion_id}.rvol"
        rvol.save_volume(vol_path, patch.volume)
        rvol.save_mask(out_dir / f"{lesion_id}.mask.rvol", patch.lesion_mask)
        if patch.gt_rim_mask is not None:
            rvol.save_mask(out_dir / f"{lesion_id}.rim.rvol", patch.gt_rim_mask)
        entries.append(
            ManifestEntry(
                lesion_id=lesion_id,
                path=vol_path.name,
                label=patch.label,
                seed=spec.seed,
                spec=spec,
            )
        )
    manifest = DatasetManifest(entries=entries, seed=config.seed, mode=config.mode)
    manifest.save(out_dir / "manifest.json")
    return manifest


def load_patch(manifest: DatasetManifest, entry: ManifestEntry, dataset_dir) -> LesionPatch:
    """Reload one lesion's RVOL files into a LesionPatch."""
    dataset_dir = Path(dataset_dir)
    stem = entry.path[: -len(".rvol")]
    volume = rvol.load_volume(dataset_dir / entry.path)
    lesion_mask = rvol.load_mask(dataset_dir / f"{stem}.mask.rvol")
    rim_path = dataset_dir / f"{stem}.rim.rvol"
    gt_rim = rvol.load_mask(rim_path) if rim_path.exists() else None
    return LesionPatch(
        volume=volume,
        lesion_mask=lesion_mask,
        gt_rim_mask=gt_rim,
        label=entry.label,
        spec=entry.spec,
    )


def split_dataset(
    manifest: DatasetManifest, ratio: float, seed: int
) -> tuple[DatasetManifest, DatasetManifest]:
    """Random disjoint split stratified by label; ratio is the train share."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5B)))
    train, test = [], []
    for label in ("rim+", "rim-"):
        group = [e for e in manifest.entries if e.label == label]
        order = rng.permutation(len(group))
        n_train = int(round(ratio * len(group)))
        for rank, idx in enumerate(order):
            (train if rank < n_train else test).append(group[idx])
    key = {e.lesion_id: i for i, e in enumerate(manifest.entries)}
    train.sort(key=lambda e: key[e.lesion_id])
    test.sort(key=lambda e: key[e.lesion_id])
    return (
        DatasetManifest(entries=train, seed=manifest.seed, mode=manifest.mode),
        DatasetManifest(entries=test, seed=manifest.seed, mode=manifest.mode),
    )
