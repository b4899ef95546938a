"""Basic closed semi-algebraic design spaces {x : g_j(x) >= 0}."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionMismatch, MissingCompactnessCertificate, SamplingExhausted
from .polybasis import Polynomial, norm_squared

DEFAULT_MEMBERSHIP_TOL = 1e-8


def ball_polynomial(n: int, radius: float) -> Polynomial:
    return Polynomial.constant(n, radius**2) - norm_squared(n)


def detect_ball_radius(g: Polynomial) -> float | None:
    """Return R if ``g`` is exactly R^2 - sum x_i^2, else None."""
    n = g.n
    terms = g.terms
    const = terms.pop((0,) * n, 0.0)
    if const <= 0:
        return None
    for i in range(n):
        alpha = tuple(2 if j == i else 0 for j in range(n))
        if terms.pop(alpha, 0.0) != -1.0:
            return None
    if terms:
        return None
    return math.sqrt(const)


@dataclass(frozen=True)
class SemiAlgebraicSet:
    n: int
    inequalities: tuple[Polynomial, ...]
    ball_radius: float | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        ineqs = tuple(self.inequalities)
        if not ineqs:
            raise ValueError("a design space needs at least one inequality")
        for g in ineqs:
            if g.n != self.n:
                raise DimensionMismatch(f"inequality in dimension {g.n}, set in {self.n}")
        object.__setattr__(self, "inequalities", ineqs)
        if self.ball_radius is not None:
            if self.ball_radius <= 0:
                raise ValueError("ball_radius must be positive")
            if not any(detect_ball_radius(g) == self.ball_radius for g in ineqs):
                raise ValueError("ball_radius set but the ball constraint is missing")

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(g.degree for g in self.inequalities)

    @property
    def half_degrees(self) -> tuple[int, ...]:
        return tuple(math.ceil(dj / 2) for dj in self.degrees)

    @property
    def m(self) -> int:
        return len(self.inequalities)

    @property
    def max_half_degree(self) -> int:
        return max(self.half_degrees)

    def equality_pairs(self) -> list[tuple[int, int]]:
        """Index pairs (i, j), i < j, with g_j == -g_i (an encoded equality)."""
        pairs = []
        for i, gi in enumerate(self.inequalities):
            for j in range(i + 1, self.m):
                if self.inequalities[j] == -gi:
                    pairs.append((i, j))
        return pairs

    def values(self, points) -> np.ndarray:
        """Matrix of g_j(x_i), shape (len(points), m)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.n)
        return np.column_stack([g.evaluate_many(pts) for g in self.inequalities])

    def to_json(self) -> dict:
        out = {"n": self.n, "inequalities": [g.to_json() for g in self.inequalities]}
        if self.ball_radius is not None:
            out["ball_radius"] = self.ball_radius
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SemiAlgebraicSet":
        n = int(data["n"])
        ineqs = []
        for k, entries in enumerate(data["inequalities"]):
            try:
                ineqs.append(Polynomial.from_json(n, entries))
            except ValueError as exc:
                raise ValueError(f"inequalities[{k}]: {exc}") from exc
        return cls(n, tuple(ineqs), data.get("ball_radius"))


def validate_archimedean(X: SemiAlgebraicSet, radius_hint: float | None = None) -> SemiAlgebraicSet:
    """Make sure X carries an explicit R^2 - |x|^2 >= 0 constraint."""
    for g in X.inequalities:
        R = detect_ball_radius(g)
        if R is not None:
            return X if X.ball_radius == R else replace(X, ball_radius=R)
    if radius_hint is None:
        raise MissingCompactnessCertificate(
            "no constraint of the form R^2 - |x|^2 >= 0; supply a radius hint"
        )
    if radius_hint <= 0:
        raise ValueError("radius hint must be positive")
    ineqs = X.inequalities + (ball_polynomial(X.n, radius_hint),)
    return SemiAlgebraicSet(X.n, ineqs, float(radius_hint), X.name)


def membership(X: SemiAlgebraicSet, x, tol: float = DEFAULT_MEMBERSHIP_TOL) -> bool:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != X.n:
        raise DimensionMismatch(f"point has dimension {x.shape[0]}, set has {X.n}")
    return bool(np.all(X.values(x[None, :]) >= -tol))


def membership_many(X: SemiAlgebraicSet, points, tol: float = DEFAULT_MEMBERSHIP_TOL) -> np.ndarray:
    return np.all(X.values(points) >= -tol, axis=1)


def _radial_projection(g: Polynomial, u: np.ndarray, rmax: float) -> float | None:
    # Smallest positive root of r -> g(r u) on (0, rmax], found on a fine bracket.
    rs = np.linspace(0.0, rmax, 65)
    vals = g.evaluate_many(rs[:, None] * u[None, :])
    for k in range(len(rs) - 1):
        if vals[k] == 0.0 and k > 0:
            return float(rs[k])
        if vals[k] * vals[k + 1] < 0:
            return float(brentq(lambda r: g(r * u), rs[k], rs[k + 1], xtol=1e-15, rtol=1e-15))
    if vals[-1] == 0.0:
        return float(rs[-1])
    return None


def sample_points(
    X: SemiAlgebraicSet,
    count: int,
    seed: int = 0,
    max_draws: int = 10_000_000,
) -> np.ndarray:
    """Draw ``count`` points of X by rejection from the box [-R, R]^n.

    Sets containing an encoded equality (g, -g) have empty interior; there each
    box draw is pushed radially onto {g = 0} before the rejection test.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if X.ball_radius is None:
        raise MissingCompactnessCertificate("sampling needs a validated ball radius")
    R = X.ball_radius
    rng = np.random.default_rng(seed)
    pairs = X.equality_pairs()
    accepted: list[np.ndarray] = []
    drawn = 0
    batch = max(1024, 4 * count)
    while sum(len(a) for a in accepted) < count:
        if drawn >= max_draws:
            got = sum(len(a) for a in accepted)
            raise SamplingExhausted(
                f"accepted {got} of {drawn} draws (rate {got / max(drawn, 1):.2e})"
            )
        cand = rng.uniform(-R, R, size=(batch, X.n))
        drawn += batch
        if pairs:
            g = X.inequalities[pairs[0][0]]
            projected = []
            for z in cand:
                nz = np.linalg.norm(z)
                if nz == 0.0:
                    continue
                u = z / nz
                r = _radial_projection(g, u, R * math.sqrt(X.n))
                if r is not None:
                    projected.append(r * u)
            cand = np.array(projected).reshape(-1, X.n)
        if len(cand):
            ok = membership_many(X, cand, tol=0.0 if not pairs else DEFAULT_MEMBERSHIP_TOL)
            accepted.append(cand[ok])
        if drawn >= 1_000_000 and sum(len(a) for a in accepted) < 1e-6 * drawn:
            raise SamplingExhausted(f"acceptance rate below 1e-6 after {drawn} draws")
    return np.concatenate(accepted)[:count]


def box_bounds(X: SemiAlgebraicSet) -> tuple[float, float]:
    if X.ball_radius is None:
        raise MissingCompactnessCertificate("bounding box needs a validated ball radius")
    return -X.ball_radius, X.ball_radius


def polytope_halfspace(coeffs: Sequence[float], const: float) -> Polynomial:
    """const + sum coeffs[i] x_i as a polynomial."""
    n = len(coeffs)
    terms = {(0,) * n: const}
    for i, c in enumerate(coeffs):
        terms[tuple(1 if j == i else 0 for j in range(n))] = c
    return Polynomial(n, terms)
