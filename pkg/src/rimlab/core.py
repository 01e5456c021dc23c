"""Volume/mask containers, connected components, and the anisotropic
Euclidean distance transform shared by every other module.

Arrays are indexed [x, y, z]; the on-disk layout (see rvol.py) is
x-fastest, which corresponds to Fortran order for this indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

Spacing = tuple[float, float, float]


class GridMismatchError(ValueError):
    """Raised when a volume and mask disagree on dims or spacing."""


@dataclass(frozen=True)
class Volume3D:
    """Anisotropic 3D scalar field (ppb). data shape == dims == (nx, ny, nz)."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"expected 3D data, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite intensities")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True)
class Mask3D:
    """Boolean field sharing dims/spacing semantics with Volume3D."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.bool_:
            if not np.all((data == 0) | (data == 1)):
                raise ValueError("mask data must be boolean or 0/1")
            data = data.astype(bool)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"expected 3D mask, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def count(self) -> int:
        return int(self.data.sum())


def check_paired(volume: Volume3D | Mask3D, mask: Mask3D) -> None:
    """Dims/spacing must agree whenever a volume and mask are used together."""
    if volume.dims != mask.dims:
        raise GridMismatchError(f"dims differ: {volume.dims} vs {mask.dims}")
    if not np.allclose(volume.spacing, mask.spacing):
        raise GridMismatchError(
            f"spacing differs: {volume.spacing} vs {mask.spacing}"
        )


@dataclass(frozen=True)
class DistanceMap:
    """Per-voxel distance (mm) to the nearest background voxel center.

    Defined inside the mask, 0 outside. d_max is the in-mask maximum.
    """

    d: np.ndarray
    spacing: Spacing
    d_max: float = field(default=0.0)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.d.shape


def connected_components(mask: Mask3D, connectivity: int = 26):
    """Label connected components of a boolean mask.

    connectivity is 6 (faces) or 26 (faces+edges+corners). Returns
    (labels int32 array, component count); empty mask gives count 0.
    """
    if connectivity == 6:
        structure = ndimage.generate_binary_structure(3, 1)
    elif connectivity == 26:
        structure = np.ones((3, 3, 3), dtype=bool)
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")
    labels, count = ndimage.label(mask.data, structure=structure)
    return labels.astype(np.int32), int(count)


def distance_to_edge(mask: Mask3D) -> DistanceMap:
    """Spacing-scaled Euclidean distance from each in-mask voxel to the
    nearest background voxel center.

    Positions outside the array count as background, so a mask touching
    the border still has finite distances there.
    """
    padded = np.pad(mask.data, 1, mode="constant", constant_values=False)
    d = ndimage.distance_transform_edt(padded, sampling=mask.spacing)
    d = d[1:-1, 1:-1, 1:-1]
    d[~mask.data] = 0.0
    d_max = float(d.max()) if mask.data.any() else 0.0
    return DistanceMap(d=d, spacing=mask.spacing, d_max=d_max)


def mask_stats(mask: Mask3D) -> tuple[int, float]:
    """Voxel count and physical volume (mm^3)."""
    n = mask.count()
    return n, n * mask.voxel_volume
