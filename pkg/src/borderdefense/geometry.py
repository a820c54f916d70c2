"""Apollonius circles, dominance regions and Nash payoffs of the pursuit phase.

Every function here is a pure function of its arguments.  Positions are
plain ``(x, y)`` pairs; :class:`Point2` is a ``NamedTuple`` so tuples and
NumPy rows are accepted wherever a point is expected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# Feasibility slack on squared distances (unit-domain scale).
FEASIBILITY_EPS = 1e-9
# Relative slack used to snap near-tangent circle pairs to a single point.
TANGENCY_RTOL = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input (non-finite coordinates, speed ratio <= 1)."""


class NoCaptureCapability(GeometryError):
    """Raised when a Nash payoff is requested without any capturing defender."""


class Point2(NamedTuple):
    x: float
    y: float


class Circle(NamedTuple):
    center: Point2
    radius: float


class Intersection(NamedTuple):
    """Boundary intersection of two circles.

    ``coincident`` is set for identical circles, which share every boundary
    point; ``points`` is empty in that case.
    """

    points: tuple[Point2, ...]
    coincident: bool = False


@dataclass(frozen=True)
class PursuitConfig:
    """Attacker position plus ``(position, speed_ratio)`` of each capturing defender."""

    attacker: Point2
    capture_defenders: tuple[tuple[Point2, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "attacker", _point(self.attacker))
        defenders = tuple((_point(p), float(nu)) for p, nu in self.capture_defenders)
        for _, nu in defenders:
            _check_nu(nu)
        object.__setattr__(self, "capture_defenders", defenders)

    def with_defender(self, position, nu: float) -> "PursuitConfig":
        return PursuitConfig(self.attacker, self.capture_defenders + ((position, nu),))

    def circles(self) -> list[Circle]:
        return [apollonius_circle(self.attacker, p, nu) for p, nu in self.capture_defenders]


@dataclass(frozen=True)
class NashSolution:
    payoff: float
    intercept_point: Point2
    clamped: bool

    @property
    def unclamped(self) -> float:
        return self.intercept_point.y


def _point(p) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"non-finite position {p!r}")
    return Point2(x, y)


def _check_nu(nu: float) -> None:
    if not math.isfinite(nu) or nu <= 1.0:
        raise GeometryError(f"speed ratio must exceed 1 (got {nu!r})")


def apollonius_circle(attacker, defender, nu: float) -> Circle:
    """Boundary of the attacker's dominance region against one defender.

    The circle is the locus ``|p - attacker| / |p - defender| = 1 / nu``.
    Coincident agents give a zero-radius circle at the attacker.
    """
    _check_nu(nu)
    ax, ay = _point(attacker)
    dx, dy = _point(defender)
    nu2 = nu * nu
    denom = nu2 - 1.0
    center = Point2((nu2 * ax - dx) / denom, (nu2 * ay - dy) / denom)
    radius = nu * math.hypot(ax - dx, ay - dy) / denom
    return Circle(center, radius)


def nash_payoff_single(attacker, defender, nu: float) -> NashSolution:
    """Closed-form equilibrium payoff for one defender: ``max(0, c_y - r)``."""
    c, r = apollonius_circle(attacker, defender, nu)
    low = c.y - r
    return NashSolution(max(0.0, low), Point2(c.x, low), low < 0.0)


def circle_pair_intersections(a: Circle, b: Circle) -> Intersection:
    (ax, ay), ra = a
    (bx, by), rb = b
    dx, dy = bx - ax, by - ay
    d = math.hypot(dx, dy)
    scale = max(ra, rb, d, 1e-300)
    tol = TANGENCY_RTOL * scale
    if d <= tol:
        return Intersection((), coincident=abs(ra - rb) <= tol)
    if d > ra + rb + tol or d < abs(ra - rb) - tol:
        return Intersection(())
    # distance from a's center to the chord midpoint along the center line
    along = (d * d + ra * ra - rb * rb) / (2.0 * d)
    h2 = ra * ra - along * along
    ux, uy = dx / d, dy / d
    mx, my = ax + along * ux, ay + along * uy
    if h2 <= (tol * scale) or abs(d - (ra + rb)) <= tol or abs(d - abs(ra - rb)) <= tol:
        return Intersection((Point2(mx, my),))
    h = math.sqrt(h2)
    return Intersection((Point2(mx - h * uy, my + h * ux), Point2(mx + h * uy, my - h * ux)))


def _feasible(p: Point2, circles: Sequence[Circle], skip: Iterable[int] = ()) -> bool:
    skip = set(skip)
    for k, ((cx, cy), r) in enumerate(circles):
        if k in skip:
            continue
        if (p.x - cx) ** 2 + (p.y - cy) ** 2 > r * r + FEASIBILITY_EPS:
            return False
    return True


def lowest_point(circles: Sequence[Circle]) -> Point2:
    """Lowest point of the intersection of closed disks.

    The objective is linear, so the minimiser is either the bottom of one disk
    (if the other disks contain it) or a vertex where two boundaries cross.
    Both candidate families are enumerated and filtered for feasibility.
    """
    if not circles:
        raise NoCaptureCapability("no capture-capable defender")
    candidates: list[tuple[float, float, int, Point2]] = []
    for i, ((cx, cy), r) in enumerate(circles):
        bottom = Point2(cx, cy - r)
        if _feasible(bottom, circles, skip=(i,)):
            candidates.append((bottom.y, bottom.x, len(candidates), bottom))
    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            for p in circle_pair_intersections(circles[i], circles[j]).points:
                if _feasible(p, circles, skip=(i, j)):
                    candidates.append((p.y, p.x, len(candidates), p))
    if not candidates:
        raise AssertionError("empty candidate set for a nonempty disk intersection")
    y_min = min(c[0] for c in candidates)
    # ties within eps: smallest x, then enumeration order
    tied = [c for c in candidates if c[0] <= y_min + FEASIBILITY_EPS]
    return min(tied, key=lambda c: (c[1], c[2]))[3]


def nash_payoff_multi(config: PursuitConfig) -> NashSolution:
    """Lowest point of the intersection of all Apollonius disks, clamped at 0.

    Raises :class:`NoCaptureCapability` for an empty defender list.
    """
    circles = config.circles()
    if len(circles) == 1:
        p, nu = config.capture_defenders[0]
        return nash_payoff_single(config.attacker, p, nu)
    p = lowest_point(circles)
    return NashSolution(max(0.0, p.y), p, p.y < 0.0)


def nash_payoff_oracle(config: PursuitConfig, grid_resolution: int = 2000) -> float:
    """Brute-force grid minimum of ``p_y`` over the disk intersection.

    The grid spans the bounding box of all disks with ``grid_resolution``
    points per axis.  Only grid points inside every disk are kept; the
    attacker, which lies inside every disk, is always added as a sample.
    Error is bounded by ``2 * span / grid_resolution``.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    circles = config.circles()
    if not circles:
        raise NoCaptureCapability("no capture-capable defender")
    cx = np.array([c.center.x for c in circles])
    cy = np.array([c.center.y for c in circles])
    r = np.array([c.radius for c in circles])
    xs = np.linspace((cx - r).min(), (cx + r).max(), grid_resolution)
    ys = np.linspace((cy - r).min(), (cy + r).max(), grid_resolution)

    # Rows are scanned in blocks from the bottom; the first block containing a
    # feasible point yields the answer.
    best = config.attacker.y
    r2 = r * r + FEASIBILITY_EPS
    block = max(1, 2_000_000 // (grid_resolution * len(circles)))
    for start in range(0, grid_resolution, block):
        yb = ys[start:start + block]
        if yb[0] >= best:
            break
        inside = np.ones((yb.size, xs.size), dtype=bool)
        for k in range(len(circles)):
            inside &= ((xs[None, :] - cx[k]) ** 2 + (yb[:, None] - cy[k]) ** 2) <= r2[k]
        rows = np.flatnonzero(inside.any(axis=1))
        if rows.size:
            best = min(best, float(yb[rows[0]]))
            break
    return max(0.0, best)


@dataclass(frozen=True)
class Landscape:
    """Row-major payoff matrix: ``values[j, i]`` is the payoff at ``(xs[i], ys[j])``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray


def payoff_landscape(
    fixed: PursuitConfig,
    varying_defender_nu: float,
    x_range: tuple[float, float] = (0.0, 1.0),
    y_range: tuple[float, float] = (0.0, 1.0),
    resolution: int | tuple[int, int] = 50,
) -> Landscape:
    """Nash payoff as a function of one extra defender's position.

    Cells are sampled at their centres.  A failed solve marks the cell with
    NaN instead of aborting the sweep.
    """
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be positive")
    _check_nu(varying_defender_nu)

    def centers(lo, hi, n):
        edges = np.linspace(lo, hi, n + 1)
        return 0.5 * (edges[:-1] + edges[1:])

    xs, ys = centers(*x_range, nx), centers(*y_range, ny)
    values = np.empty((ny, nx))
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            try:
                values[j, i] = nash_payoff_multi(fixed.with_defender((x, y), varying_defender_nu)).payoff
            except (GeometryError, AssertionError):
                values[j, i] = np.nan
    return Landscape(xs, ys, values)
