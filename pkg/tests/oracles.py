"""Independent reference computations shared by the tests."""
import numpy as np
from scipy.spatial import cKDTree
from skimage.feature import peak_local_max
from skimage.registration import phase_cross_correlation

from latticescope.grid import Grid2D


def _refine(values, i, j, X, Y):
    """Vertex of a quadratic surface fitted to the 5x5 neighbourhood of (i, j)."""
    sl = (slice(i - 2, i + 3), slice(j - 2, j + 3))
    scale = abs(X[i + 1, j] - X[i, j])
    x, y = (X[sl].ravel() - X[i, j]) / scale, (Y[sl].ravel() - Y[i, j]) / scale
    z = values[sl].ravel()
    A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    c = np.linalg.lstsq(A, z, rcond=None)[0]
    H = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    off = np.linalg.solve(H, -c[1:3])
    return X[i, j] + off[0] * scale, Y[i, j] + off[1] * scale


def nearest_neighbour_spacing(image):
    """Median nearest-neighbour distance between sub-pixel local intensity maxima."""
    peaks = peak_local_max(image.values, min_distance=3, exclude_border=3, threshold_rel=0.5)
    X, Y = image.grid.coordinates()
    pts = np.array([_refine(image.values, i, j, X, Y) for i, j in peaks])
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


def periodic_grid(lattice_constant, cells=4, samples_per_cell=64):
    """60-degree grid spanning whole cells of a hexagonal lattice whose
    translation vectors point along 0 and 60 degrees."""
    n = cells * samples_per_cell
    return Grid2D(pitch=lattice_constant / samples_per_cell, nx=n, ny=n, angle=np.pi / 3)


def correlation_shift(before, after, upsample=400, samples_per_cell=64):
    """Pattern displacement from ``before`` to ``after`` by upsampled cross-correlation.

    Both images must come from :func:`periodic_grid`.  The pattern repeats
    every ``samples_per_cell`` samples along each axis, so the correlation
    only fixes the shift up to a lattice vector; the shortest equivalent
    shift is returned.
    """
    shift, _, _ = phase_cross_correlation(before.values, after.values, upsample_factor=upsample,
                                          normalization=None)
    # the returned shift registers ``after`` onto ``before``
    axes = np.asarray(before.grid.axes)
    d = -(shift[0] * axes[0] + shift[1] * axes[1])
    cell = samples_per_cell * axes
    candidates = [d + i * cell[0] + j * cell[1] for i in range(-3, 4) for j in range(-3, 4)]
    return min(candidates, key=np.linalg.norm)
