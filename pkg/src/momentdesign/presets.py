"""Named design spaces and reference designs for the worked examples."""

from __future__ import annotations

import math

import numpy as np

from .polybasis import Polynomial
from .semialg import SemiAlgebraicSet, ball_polynomial, polytope_halfspace, validate_archimedean

PRESET_NAMES = ("interval", "wynn_polygon", "ellipse_ring", "moon", "folium", "sphere3d")


def _xy(n: int = 2):
    return Polynomial.variable(n, 0), Polynomial.variable(n, 1)


def interval() -> SemiAlgebraicSet:
    return validate_archimedean(SemiAlgebraicSet(1, (ball_polynomial(1, 1.0),), name="interval"))


def wynn_polygon() -> SemiAlgebraicSet:
    # Vertices (-1,-1), (-1,1), (1,-1), (2,2) scaled into the unit disk.
    s = math.sqrt(2.0)
    cuts = (
        polytope_halfspace([1.0, 0.0], s / 4),  # x1 >= -sqrt(2)/4
        polytope_halfspace([0.0, 1.0], s / 4),  # x2 >= -sqrt(2)/4
        polytope_halfspace([-1.0, 1.0 / 3.0], s / 3),  # x1 <= (x2 + sqrt 2)/3
        polytope_halfspace([1.0 / 3.0, -1.0], s / 3),  # x2 <= (x1 + sqrt 2)/3
    )
    X = SemiAlgebraicSet(2, cuts, name="wynn_polygon")
    return validate_archimedean(X, radius_hint=1.0)


def ellipse_ring() -> SemiAlgebraicSet:
    x, y = _xy()
    outer = 7.3 - 9 * x * x - 13 * y * y
    inner = 5 * x * x + 13 * y * y - 2
    return validate_archimedean(SemiAlgebraicSet(2, (outer, inner), name="ellipse_ring"), 1.0)


def moon() -> SemiAlgebraicSet:
    x, y = _xy()
    big = 0.36 - (x + 0.2) * (x + 0.2) - y * y
    small = (x - 0.6) * (x - 0.6) + y * y - 0.16
    return validate_archimedean(SemiAlgebraicSet(2, (big, small), name="moon"), 1.0)


def folium() -> SemiAlgebraicSet:
    x, y = _xy()
    r2 = x * x + y * y
    f = -1 * x * (x * x - 2 * y * y) - r2 * r2
    return validate_archimedean(SemiAlgebraicSet(2, (f, ball_polynomial(2, 1.0)), name="folium"))


def sphere3d() -> SemiAlgebraicSet:
    g = ball_polynomial(3, 1.0)
    return validate_archimedean(SemiAlgebraicSet(3, (g, -g), name="sphere3d"))


def singleton_at_one() -> SemiAlgebraicSet:
    """{x : x - 1 >= 0, 1 - x^2 >= 0} = {1}; useful degenerate fixture."""
    x = Polynomial.variable(1, 0)
    return validate_archimedean(SemiAlgebraicSet(1, (x - 1.0, ball_polynomial(1, 1.0)), name="singleton"))


_BUILDERS = {
    "interval": interval,
    "wynn_polygon": wynn_polygon,
    "ellipse_ring": ellipse_ring,
    "moon": moon,
    "folium": folium,
    "sphere3d": sphere3d,
}


def preset(name: str) -> SemiAlgebraicSet:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


# 2 - (x^4 + y^4 + z^4) is positive on the sphere. The D-optimal measure there
# is not unique (the cube and the octahedron are both optimal); the trace
# objective lands on the cube, this one on the six points +-e_i.
SPHERE_OBJECTIVE = [
    {"exponents": [0, 0, 0], "coeff": 2.0},
    {"exponents": [4, 0, 0], "coeff": -1.0},
    {"exponents": [0, 4, 0], "coeff": -1.0},
    {"exponents": [0, 0, 4], "coeff": -1.0},
]

# Default solve/recovery orders used by the worked examples.
PRESET_DEFAULTS = {
    "interval": {"d": 5, "delta": 0, "r": 1},
    "wynn_polygon": {"d": 1, "delta": 3, "r": 3},
    "ellipse_ring": {"d": 1, "delta": 3, "r": 3},
    "moon": {"d": 1, "delta": 3, "r": 3},
    "folium": {"d": 1, "delta": 3, "r": 3},
    "sphere3d": {"d": 1, "delta": 0, "r": 2, "objective": SPHERE_OBJECTIVE},
}

# Published D-optimal supports and weights (two decimals for points, three
# for weights) for the planar examples, keyed by preset then degree d.
REFERENCE_DESIGNS: dict[str, dict[int, list[tuple[float, float, float]]]] = {
    "wynn_polygon": {
        1: [(-0.35, -0.35, 0.125), (-0.35, 0.35, 0.281), (0.35, -0.35, 0.281), (0.71, 0.71, 0.313)],
        2: [
            (-0.35, -0.35, 0.163), (-0.35, 0.35, 0.165), (0.12, 0.12, 0.066),
            (0.35, -0.35, 0.165), (0.18, 0.53, 0.141), (0.53, 0.18, 0.141), (0.71, 0.71, 0.159),
        ],
        3: [
            (-0.35, -0.35, 0.095), (0.02, -0.35, 0.074), (-0.35, 0.02, 0.074),
            (0.35, -0.35, 0.096), (0.14, -0.12, 0.044), (-0.12, 0.14, 0.044),
            (-0.35, 0.35, 0.097), (0.45, -0.06, 0.088), (-0.06, 0.45, 0.088),
            (0.39, 0.39, 0.037), (0.61, 0.41, 0.084), (0.41, 0.61, 0.084), (0.71, 0.71, 0.097),
        ],
    },
    "ellipse_ring": {
        1: [(-0.00, -0.75, 0.250), (-0.90, -0.00, 0.250), (0.90, 0.00, 0.250), (0.00, 0.75, 0.250)],
        2: [
            (-0.45, -0.65, 0.134), (-0.90, -0.00, 0.139), (-0.00, -0.39, 0.093),
            (0.45, -0.65, 0.134), (-0.45, 0.65, 0.134), (0.00, 0.39, 0.093),
            (0.90, 0.00, 0.139), (0.45, 0.65, 0.134),
        ],
        3: [
            (-0.64, -0.53, 0.085), (-0.90, 0.00, 0.088), (-0.00, -0.75, 0.088),
            (-0.36, -0.32, 0.075), (0.00, -0.39, 0.005), (-0.64, 0.53, 0.085),
            (-0.36, 0.32, 0.075), (0.36, -0.32, 0.075), (0.64, -0.53, 0.085),
            (-0.00, 0.39, 0.005), (0.36, 0.32, 0.075), (-0.00, 0.75, 0.088),
            (0.90, -0.00, 0.088), (0.64, 0.53, 0.085),
        ],
    },
    "moon": {
        1: [(-0.80, 0.00, 0.329), (0.07, -0.53, 0.305), (0.07, 0.53, 0.305), (0.33, -0.29, 0.031), (0.33, 0.29, 0.031)],
        2: [
            (-0.39, -0.57, 0.167), (-0.80, 0.00, 0.167), (-0.20, -0.00, 0.167),
            (0.29, -0.35, 0.167), (-0.39, 0.57, 0.167), (0.29, 0.35, 0.167),
        ],
        3: [
            (-0.57, -0.47, 0.099), (-0.08, -0.59, 0.098), (-0.80, 0.00, 0.100),
            (-0.45, -0.18, 0.061), (-0.11, -0.30, 0.062), (-0.45, 0.18, 0.061),
            (0.33, -0.29, 0.099), (-0.57, 0.47, 0.099), (0.11, -0.00, 0.063),
            (-0.11, 0.30, 0.062), (-0.08, 0.59, 0.098), (0.33, 0.29, 0.099),
        ],
    },
    "folium": {
        1: [(0.29, -0.55, 0.333), (-1.00, 0.00, 0.333), (0.29, 0.55, 0.333)],
        2: [
            (-1.00, 0.00, 0.167), (-0.60, -0.21, 0.166), (-0.60, 0.21, 0.166),
            (0.28, -0.56, 0.162), (0.21, -0.20, 0.088), (0.21, 0.20, 0.088), (0.28, 0.56, 0.162),
        ],
        3: [
            (-1.00, -0.00, 0.100), (-0.77, -0.20, 0.099), (-0.77, 0.20, 0.099),
            (-0.45, 0.00, 0.077), (-0.14, -0.00, 0.033), (0.10, -0.41, 0.098),
            (0.29, -0.56, 0.099), (0.31, -0.35, 0.100), (0.10, 0.41, 0.098),
            (0.31, 0.35, 0.100), (0.29, 0.56, 0.099),
        ],
    },
}


def reference_design(name: str, d: int) -> tuple[np.ndarray, np.ndarray] | None:
    rows = REFERENCE_DESIGNS.get(name, {}).get(d)
    if rows is None:
        return None
    arr = np.array(rows)
    return arr[:, :2], arr[:, 2]


def univariate_reference(d: int) -> np.ndarray:
    """Roots of (1 - t^2) P_d'(t): the known D-optimal support on [-1, 1]."""
    from numpy.polynomial import legendre

    dP = legendre.legder(np.eye(d + 1)[d])
    inner = legendre.legroots(dP) if d > 1 else np.array([])
    return np.sort(np.concatenate([[-1.0, 1.0], inner]))


__all__ = [
    "PRESET_NAMES",
    "PRESET_DEFAULTS",
    "REFERENCE_DESIGNS",
    "preset",
    "reference_design",
    "singleton_at_one",
    "univariate_reference",
]
