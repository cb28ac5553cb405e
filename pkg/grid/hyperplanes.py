import numpy as np


def hyperplanes(count):
    """
    Coefficients of the regular-polygon inner approximation of a capacity disk.

    Facet j has normal angle 2*pi*j/count and is scaled by 1/cos(pi/count), so
    every vertex of {x : coef_p*x_p + coef_q*x_q <= C for all j} lies on the
    circle of radius C and the polygon sits inside the disk.

    Args:
        count (int): number of hyperplanes J, at least 4
    Returns:
        np.ndarray: shape (count, 2), columns (coef_p, coef_q)
    """
    if count < 4:
        raise ValueError(f"need at least 4 hyperplanes, got {count}")
    theta = 2.0 * np.pi * np.arange(count) / count
    scale = 1.0 / np.cos(np.pi / count)
    return np.column_stack([np.cos(theta), np.sin(theta)]) * scale


def polygon_vertices(count, capacity=1.0):
    """Vertices of the polygon returned by ``hyperplanes`` for a given capacity."""
    theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
    return capacity * np.column_stack([np.cos(theta), np.sin(theta)])


def inside_polygon(points, count, capacity=1.0, tol=0.0):
    """Boolean mask of the rows of ``points`` (n, 2) satisfying every facet."""
    lhs = np.atleast_2d(points) @ hyperplanes(count).T
    return (lhs <= capacity + tol).all(axis=1)
