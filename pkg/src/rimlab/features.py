"""RimSet measurement extraction.

Per lesion: 19 first-order intensity measurements over each of the full,
high, and low masks (57), distance mean/STD to the full lesion edge for
the three masks (6), connected-component counts for high and low (2),
the high/full volume fraction (1), and an 18-bin uniform
rotation-invariant LBP histogram over the full mask (18) -- 84 values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Mask3D, Volume3D, connected_components, distance_to_edge
from .rimseg import RimSegResult
from .simulator import LesionPatch

HISTOGRAM_BINS = 32
LBP_POINTS = 16
LBP_RADIUS = 5.0
LBP_BINS = LBP_POINTS + 2  # 0..16 uniform patterns + 1 non-uniform bin

FIRST_ORDER_NAMES = (
    "volume",
    "mean",
    "harmonic_mean",
    "median",
    "mad",
    "rms",
    "rmsd",
    "minimum",
    "maximum",
    "p10",
    "p90",
    "iqr",
    "range",
    "std",
    "skewness",
    "kurtosis",
    "energy",
    "entropy",
    "uniformity",
)

MASK_VARIANTS = ("full", "high", "low")

#: Canonical ordering of the 84 RimSet measurements.
RIMSET_NAMES = tuple(
    [f"{name}_{variant}" for variant in MASK_VARIANTS for name in FIRST_ORDER_NAMES]
    + [f"{stat}_distance_{variant}" for variant in MASK_VARIANTS for stat in ("mean", "std")]
    + ["n_components_high", "n_components_low", "volume_fraction_high"]
    + [f"lbp_{i:02d}" for i in range(LBP_BINS)]
)
assert len(RIMSET_NAMES) == 84


@dataclass(frozen=True)
class FirstOrderSet:
    volume: float
    mean: float
    harmonic_mean: float
    median: float
    mad: float
    rms: float
    rmsd: float
    minimum: float
    maximum: float
    p10: float
    p90: float
    iqr: float
    range: float
    std: float
    skewness: float
    kurtosis: float
    energy: float
    entropy: float
    uniformity: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in FIRST_ORDER_NAMES)


@dataclass(frozen=True)
class DistanceStats:
    mean_distance: float
    std_distance: float


@dataclass(frozen=True)
class TopologyStats:
    n_components_high: int
    n_components_low: int
    volume_fraction_high: float


@dataclass(frozen=True)
class RimSetVector:
    lesion_id: str
    label: str
    values: np.ndarray  # 84 floats, ordered per RIMSET_NAMES

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (84,):
            raise ValueError(f"expected 84 values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("RimSet vector contains non-finite values")
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(RIMSET_NAMES, self.values))


def first_order(values: np.ndarray, voxel_volume: float, bins: int = HISTOGRAM_BINS) -> FirstOrderSet:
    """Table of 19 first-order intensity measurements.

    Empty input yields all zeros; zero-variance input uses the sigma = 0
    convention (dispersion and shape measures 0, uniformity 1).
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        return FirstOrderSet(*([0.0] * 19))

    mean = float(x.mean())
    mn = float(x.min())
    mx = float(x.max())
    p10, p25, median, p75, p90 = (float(v) for v in np.percentile(x, [10, 25, 50, 75, 90]))
    mad = float(np.abs(x - mean).mean())
    rms = float(np.sqrt((x**2).mean()))
    rmsd = float(np.sqrt(((x - mean) ** 2).mean()))  # 1/n, as defined
    std = float(x.std(ddof=1)) if n > 1 else 0.0
    sigma_pop = float(x.std())  # population moments for skew/kurtosis
    if sigma_pop > 0:
        z = (x - mean) / sigma_pop
        skewness = float((z**3).mean())
        kurtosis = float((z**4).mean() - 3.0)
    else:
        skewness = 0.0
        kurtosis = 0.0
    energy = float((x**2).sum())

    if mx > mn:
        counts, _ = np.histogram(x, bins=bins, range=(mn, mx))
        p = counts[counts > 0] / n
    else:
        p = np.array([1.0])
    entropy = float(-(p * np.log2(p)).sum())
    uniformity = float((p**2).sum())

    if np.any(x == 0.0):
        harmonic = 0.0
    else:
        with np.errstate(over="ignore"):  # subnormal reciprocals
            denom = (1.0 / x).sum()
        harmonic = float(n / denom) if denom != 0 and np.isfinite(denom) else 0.0

    return FirstOrderSet(
        volume=n * voxel_volume,
        mean=mean,
        harmonic_mean=harmonic,
        median=median,
        mad=mad,
        rms=rms,
        rmsd=rmsd,
        minimum=mn,
        maximum=mx,
        p10=p10,
        p90=p90,
        iqr=p75 - p25,
        range=mx - mn,
        std=std,
        skewness=skewness,
        kurtosis=kurtosis,
        energy=energy,
        entropy=entropy,
        uniformity=uniformity,
    )


def distance_stats(mask: Mask3D, full_lesion_distance) -> DistanceStats:
    """Mean/STD (n-1) of the distance-to-full-lesion-edge over a sub-mask."""
    d = full_lesion_distance.d[mask.data]
    if d.size == 0:
        return DistanceStats(0.0, 0.0)
    std = float(d.std(ddof=1)) if d.size > 1 else 0.0
    return DistanceStats(float(d.mean()), std)


def _bilinear_diff(
    img: np.ndarray, xs: np.ndarray, ys: np.ndarray, centers: np.ndarray
) -> np.ndarray:
    """Bilinear sample minus center, with edge-replication padding.

    Weighting the corner differences (rather than subtracting after
    interpolation) keeps the result exactly zero on constant images, so
    the >= tie convention is stable against rounding.
    """
    nx, ny = img.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x0c = np.clip(x0, 0, nx - 1)
    x1c = np.clip(x0 + 1, 0, nx - 1)
    y0c = np.clip(y0, 0, ny - 1)
    y1c = np.clip(y0 + 1, 0, ny - 1)
    return (
        (img[x0c, y0c] - centers) * (1 - fx) * (1 - fy)
        + (img[x1c, y0c] - centers) * fx * (1 - fy)
        + (img[x0c, y1c] - centers) * (1 - fx) * fy
        + (img[x1c, y1c] - centers) * fx * fy
    )


def lbp_histogram(volume: Volume3D, mask: Mask3D) -> np.ndarray:
    """18-bin uniform rotation-invariant LBP histogram (P=16, R=5 pixels).

    Computed per axial slice over in-mask pixels; ties compare as
    sample >= center. Bins 0..16 hold uniform patterns by 1-bit count,
    bin 17 the non-uniform remainder; normalized to sum 1. Empty mask
    gives the all-zero histogram.
    """
    hist = np.zeros(LBP_BINS, dtype=np.float64)
    angles = 2.0 * np.pi * np.arange(LBP_POINTS) / LBP_POINTS
    dx = LBP_RADIUS * np.cos(angles)
    dy = LBP_RADIUS * np.sin(angles)
    total = 0
    for z in range(volume.dims[2]):
        mz = mask.data[:, :, z]
        if not mz.any():
            continue
        img = volume.data[:, :, z]
        xs, ys = np.nonzero(mz)
        centers = img[xs, ys]
        bits = np.empty((xs.size, LBP_POINTS), dtype=bool)
        for k in range(LBP_POINTS):
            bits[:, k] = _bilinear_diff(img, xs + dx[k], ys + dy[k], centers) >= 0.0
        transitions = (bits != np.roll(bits, 1, axis=1)).sum(axis=1)
        ones = bits.sum(axis=1)
        codes = np.where(transitions <= 2, ones, LBP_POINTS + 1)
        hist += np.bincount(codes, minlength=LBP_BINS)
        total += xs.size
    if total > 0:
        hist /= total
    return hist


def topology_stats(full: Mask3D, high: Mask3D, low: Mask3D, connectivity: int = 26) -> TopologyStats:
    _, n_high = connected_components(high, connectivity)
    _, n_low = connected_components(low, connectivity)
    n_full = full.count()
    frac = high.count() / n_full if n_full > 0 else 0.0
    return TopologyStats(n_high, n_low, frac)


def extract_rimset(
    patch: LesionPatch, seg: RimSegResult, lesion_id: str = ""
) -> RimSetVector:
    """Assemble the 84-element measurement vector in canonical order."""
    volume = patch.volume
    full = patch.lesion_mask
    high, low = seg.high_mask, seg.low_mask
    vv = volume.voxel_volume

    values: list[float] = []
    for mask in (full, high, low):
        fo = first_order(volume.data[mask.data], vv)
        values.extend(fo.as_tuple())

    dist = distance_to_edge(full)
    for mask in (full, high, low):
        ds = distance_stats(mask, dist)
        values.extend((ds.mean_distance, ds.std_distance))

    topo = topology_stats(full, high, low)
    values.extend((topo.n_components_high, topo.n_components_low, topo.volume_fraction_high))

    values.extend(lbp_histogram(volume, full))
    return RimSetVector(lesion_id=lesion_id, label=patch.label, values=np.asarray(values))


def rimset_csv_header() -> list[str]:
    return ["lesion_id", "label", *RIMSET_NAMES]


def rimset_csv_row(vec: RimSetVector) -> list[str]:
    return [vec.lesion_id, vec.label, *(repr(float(v)) for v in vec.values)]
