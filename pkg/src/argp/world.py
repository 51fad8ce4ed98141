"""Ground-truth scalar fields: random-field synthesis, averaging, CSV io.

Fields live on a fine regular grid over the map extent (0.1 m cells by
default) with values normalized to [0, 1]; points above ``HOTSPOT_LEVEL``
count as ground-truth hotspots.  Synthetic fields are draws from a
zero-mean SE-covariance Gaussian random field, sampled spectrally through
circulant embedding, with a coarse-Cholesky fallback when the embedding is
not positive semi-definite for the requested length scale.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np

from .fileio import atomic_write_text
from .geometry import Rect
from .kernels import Hyperparams

HOTSPOT_LEVEL = 0.7
DEFAULT_EXTENT = Rect(0.0, 20.0, 0.0, 20.0)
DEFAULT_RESOLUTION = 0.1

# Tolerated negative spectral mass relative to the largest eigenvalue before
# the embedding is declared invalid and the Cholesky fallback kicks in.
_EMBED_TOL = 1e-8


@dataclass
class GroundTruthField:
    """Fine-grid scalar field; values[iy, ix] with y ascending along rows."""

    extent: Rect
    resolution: float
    values: np.ndarray
    metadata: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        ny, nx = self.values.shape
        if not math.isclose(nx * self.resolution, self.extent.width, rel_tol=1e-9):
            raise ValueError("grid width does not match extent / resolution")
        if not math.isclose(ny * self.resolution, self.extent.height, rel_tol=1e-9):
            raise ValueError("grid height does not match extent / resolution")

    @cached_property
    def x_centers(self) -> np.ndarray:
        nx = self.values.shape[1]
        return self.extent.x_min + (np.arange(nx) + 0.5) * self.resolution

    @cached_property
    def y_centers(self) -> np.ndarray:
        ny = self.values.shape[0]
        return self.extent.y_min + (np.arange(ny) + 0.5) * self.resolution

    def index_range(self, region: Rect) -> tuple[slice, slice]:
        """Slices of grid points whose centers fall in region (half-open membership)."""
        x0 = np.searchsorted(self.x_centers, region.x_min, side="left")
        x1 = np.searchsorted(self.x_centers, region.x_max, side="left")
        y0 = np.searchsorted(self.y_centers, region.y_min, side="left")
        y1 = np.searchsorted(self.y_centers, region.y_max, side="left")
        return slice(y0, y1), slice(x0, x1)

    def average_over(self, region: Rect) -> float:
        """Mean of the fine-grid values whose centers fall inside ``region``."""
        if self.extent.intersect(region) is None:
            raise ValueError("region does not intersect the field extent")
        ys, xs = self.index_range(region)
        block = self.values[ys, xs]
        if block.size == 0:
            raise ValueError("region covers no fine-grid sample")
        return float(block.mean())

    def hotspot_mask(self, level: float = HOTSPOT_LEVEL) -> np.ndarray:
        return self.values > level


def _normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        raise ValueError("cannot min-max normalize a constant field")
    return (values - lo) / (hi - lo)


def _spectral_sample(rng, nx, ny, resolution, hyper):
    """Circulant-embedding draw of a zero-mean SE field; None if the
    embedding has significant negative spectral mass."""
    mx, my = 2 * nx, 2 * ny
    kx = np.arange(mx)
    ky = np.arange(my)
    dx = np.minimum(kx, mx - kx) * resolution
    dy = np.minimum(ky, my - ky) * resolution
    ell2 = 2.0 * hyper.length_scale ** 2
    cov = hyper.signal_variance * np.exp(
        -(dy[:, None] ** 2 + dx[None, :] ** 2) / ell2
    )
    lam = np.fft.fft2(cov).real
    if lam.min() < -_EMBED_TOL * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    noise = rng.standard_normal((my, mx))
    sample = np.fft.ifft2(np.sqrt(lam) * np.fft.fft2(noise)).real
    return sample[:ny, :nx]


def _cholesky_sample(rng, nx, ny, extent, hyper, coarse: int = 48):
    """Fallback draw: exact sample on a coarse grid, bilinear upsample."""
    from scipy.interpolate import RegularGridInterpolator

    cx = extent.x_min + (np.arange(coarse) + 0.5) * extent.width / coarse
    cy = extent.y_min + (np.arange(coarse) + 0.5) * extent.height / coarse
    gx, gy = np.meshgrid(cx, cy)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    cov = hyper.signal_variance * np.exp(-d2 / (2.0 * hyper.length_scale ** 2))
    cov[np.diag_indices_from(cov)] += 1e-10 * hyper.signal_variance
    chol = np.linalg.cholesky(cov)
    coarse_vals = (chol @ rng.standard_normal(pts.shape[0])).reshape(coarse, coarse)
    interp = RegularGridInterpolator(
        (cy, cx), coarse_vals, bounds_error=False, fill_value=None, method="linear"
    )
    fx = extent.x_min + (np.arange(nx) + 0.5) * (extent.width / nx)
    fy = extent.y_min + (np.arange(ny) + 0.5) * (extent.height / ny)
    qy, qx = np.meshgrid(fy, fx, indexing="ij")
    return interp(np.column_stack([qy.ravel(), qx.ravel()])).reshape(ny, nx)


def generate_grf(
    seed: int,
    extent: Rect = DEFAULT_EXTENT,
    resolution: float = DEFAULT_RESOLUTION,
    hyper: Hyperparams = Hyperparams(0.25, 2.36),
    method: str = "auto",
) -> GroundTruthField:
    """Seeded Gaussian-random-field ground truth, min-max normalized to [0, 1].

    ``method`` is "auto" (spectral with Cholesky fallback), "spectral" or
    "cholesky".  The same seed always yields the same field.
    """
    nx = round(extent.width / resolution)
    ny = round(extent.height / resolution)
    if not (math.isclose(nx * resolution, extent.width, rel_tol=1e-9)
            and math.isclose(ny * resolution, extent.height, rel_tol=1e-9)):
        raise ValueError("extent sides must be integer multiples of the resolution")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    meta = {"seed": int(seed), "normalized": True, "warning": None}

    sample = None
    if method in ("auto", "spectral"):
        sample = _spectral_sample(rng, nx, ny, resolution, hyper)
        if sample is not None:
            meta["generator"] = "spectral"
        elif method == "spectral":
            raise ValueError(
                "circulant embedding not positive semi-definite for this "
                "length-scale / extent ratio; use method='auto' or 'cholesky'"
            )
    if sample is None:
        if method == "auto":
            meta["warning"] = ("spectral embedding not positive semi-definite; "
                               "coarse Cholesky fallback used")
        sample = _cholesky_sample(rng, nx, ny, extent, hyper)
        meta["generator"] = "cholesky"

    return GroundTruthField(extent, resolution, _normalize(sample), meta)


# ---------------------------------------------------------------------- io

def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def save_csv(fld: GroundTruthField, path) -> None:
    """Write the field as plain CSV (rows north to south) plus sidecar metadata."""
    rows = fld.values[::-1]  # top row = largest y
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in rows) + "\n"
    atomic_write_text(path, text)
    meta = {
        "extent_m": [fld.extent.x_min, fld.extent.x_max, fld.extent.y_min, fld.extent.y_max],
        "resolution_m": fld.resolution,
        "normalized": bool(fld.metadata.get("normalized", False)),
    }
    atomic_write_text(_sidecar_path(path), json.dumps(meta, indent=2))


def load_csv(path, extent: Rect | None = None, resolution: float | None = None,
             normalize: bool = False) -> GroundTruthField:
    """Read a CSV field (rows north to south); sidecar metadata wins over args.

    Raises ValueError naming the offending row/column for ragged or
    non-numeric input.  ``normalize=True`` rescales the values to [0, 1]
    (for raw external data such as temperatures).
    """
    rows: list[list[float]] = []
    with open(path, newline="") as handle:
        for i, row in enumerate(csv.reader(handle)):
            if not row:
                continue
            if rows and len(row) != len(rows[0]):
                raise ValueError(f"ragged CSV: row {i} has {len(row)} columns, "
                                 f"expected {len(rows[0])}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(j for j, c in enumerate(row) if not _is_float(c))
                raise ValueError(f"non-numeric cell at row {i}, column {bad}") from None
    if not rows:
        raise ValueError("empty CSV field")
    values = np.array(rows)[::-1]  # back to y ascending

    meta_path = _sidecar_path(path)
    normalized_flag = False
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        extent = Rect(*meta["extent_m"])
        resolution = float(meta["resolution_m"])
        normalized_flag = bool(meta.get("normalized", False))
    if extent is None or resolution is None:
        raise ValueError("no sidecar metadata; pass extent and resolution explicitly")
    if normalize:
        values = _normalize(values)
        normalized_flag = True
    return GroundTruthField(extent, resolution, values,
                            {"normalized": normalized_flag, "source": str(path)})


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False
