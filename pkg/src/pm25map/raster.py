"""Georeferenced raster grids with ESRI ASCII grid I/O.

Grids are stored row-major with row 0 at the top (northernmost). The origin is
the center of the upper-left cell; the ASCII header uses lower-left corner
coordinates, conversion happens on read/write.
"""

from __future__ import annotations

import os

import numpy as np

NODATA = -9999.0

# QA raster class codes (integer rasters):
#   0 = best in both masks (adjacency ok AND cloud ok)
#   1 = adjacency ok only
#   2 = cloud ok only
#   3 = neither
QA_BEST = 0
QA_ADJ_ONLY = 1
QA_CLOUD_ONLY = 2
QA_NEITHER = 3


class RasterError(ValueError):
    pass


class RasterGrid:
    """2-D cell array with a missing-value mask and a band label."""

    def __init__(self, values, mask=None, origin=(0.0, 0.0), cell_size=0.01,
                 band=""):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 2:
            raise RasterError("raster values must be 2-D")
        if mask is None:
            mask = ~np.isfinite(self.values)
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise RasterError("mask shape does not match values")
        self.origin = (float(origin[0]), float(origin[1]))  # (lat, long) of UL center
        self.cell_size = float(cell_size)
        self.band = band

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    def same_grid(self, other):
        return (self.values.shape == other.values.shape
                and np.isclose(self.cell_size, other.cell_size)
                and np.allclose(self.origin, other.origin))

    def cell_of(self, lat, long):
        """Row/col of the cell containing a point; raises if outside bounds."""
        lat0, long0 = self.origin
        col = int(np.floor((long - (long0 - self.cell_size / 2)) / self.cell_size))
        row = int(np.floor(((lat0 + self.cell_size / 2) - lat) / self.cell_size))
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise RasterError(f"point ({lat}, {long}) outside raster bounds")
        return row, col

    def cell_center(self, row, col):
        lat0, long0 = self.origin
        return lat0 - row * self.cell_size, long0 + col * self.cell_size

    def cell_centers(self):
        """(lat, long) arrays for all cell centers, shape (n_rows, n_cols)."""
        lat0, long0 = self.origin
        lats = lat0 - np.arange(self.n_rows) * self.cell_size
        longs = long0 + np.arange(self.n_cols) * self.cell_size
        return np.meshgrid(lats, longs, indexing="ij")

    def valid_values(self):
        return self.values[~self.mask]

    # ----------------------------------------------------------------- I/O

    def write_ascii(self, path):
        vals = np.where(self.mask, NODATA, self.values)
        yll = self.origin[0] - (self.n_rows - 0.5) * self.cell_size
        xll = self.origin[1] - 0.5 * self.cell_size
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(f"ncols {self.n_cols}\n")
            fh.write(f"nrows {self.n_rows}\n")
            fh.write(f"xllcorner {xll!r}\n")
            fh.write(f"yllcorner {yll!r}\n")
            fh.write(f"cellsize {self.cell_size!r}\n")
            fh.write(f"NODATA_value {NODATA!r}\n")
            for r in range(self.n_rows):
                fh.write(" ".join(repr(float(v)) for v in vals[r]) + "\n")
        os.replace(tmp, path)

    @classmethod
    def read_ascii(cls, path, band=""):
        with open(path) as fh:
            header = {}
            for _ in range(6):
                key, val = fh.readline().split()
                header[key.lower()] = float(val)
            values = np.loadtxt(fh, dtype=np.float64)
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        values = values.reshape(nrows, ncols)
        nodata = header.get("nodata_value", NODATA)
        mask = (values == nodata) | ~np.isfinite(values)
        values = np.where(mask, np.nan, values)
        cell = header["cellsize"]
        origin = (header["yllcorner"] + (nrows - 0.5) * cell,
                  header["xllcorner"] + 0.5 * cell)
        return cls(values, mask=mask, origin=origin, cell_size=cell, band=band)


def band_path(directory, band, date):
    """Per-band per-day filename convention: <band>_<YYYY-MM-DD>.asc."""
    return os.path.join(directory, f"{band}_{date}.asc")
