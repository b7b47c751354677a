"""
Finite unions of closed intervals and the quadratic inequalities that produce them.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from kmeans_selective.core.config import settings
from kmeans_selective.core.errors import InvalidArgumentError

Interval = tuple[float, float]

INF = math.inf


def _gap_tol(value: float, merge_tol: float) -> float:
    if not math.isfinite(value):
        return 0.0
    return merge_tol * max(1.0, abs(value))


def _encode(value: float) -> float | str:
    if value == INF:
        return "inf"
    if value == -INF:
        return "-inf"
    return value


def _decode(value: float | str) -> float:
    if isinstance(value, str):
        if value in ("inf", "+inf", "Infinity"):
            return INF
        if value in ("-inf", "-Infinity"):
            return -INF
        raise InvalidArgumentError(f"bad interval endpoint: {value!r}")
    return float(value)


@dataclass(frozen=True, slots=True)
class IntervalSet:
    """
    Sorted, pairwise-disjoint closed intervals.

    Infinite endpoints are allowed; an empty tuple is the empty set.
    """

    intervals: tuple[Interval, ...] = ()

    @classmethod
    def from_intervals(
        cls,
        intervals: Iterable[Sequence[float]],
        merge_tol: float | None = None,
    ) -> IntervalSet:
        """Normalize arbitrary intervals: sort, then merge overlaps and near-touching gaps."""
        tol = settings.merge_tol if merge_tol is None else merge_tol
        items: list[Interval] = []
        for lo, hi in intervals:
            lo, hi = float(lo), float(hi)
            if math.isnan(lo) or math.isnan(hi):
                raise InvalidArgumentError("interval endpoints must not be NaN")
            if lo > hi:
                raise InvalidArgumentError(f"interval [{lo}, {hi}] has lo > hi")
            items.append((lo, hi))
        items.sort()
        merged: list[list[float]] = []
        for lo, hi in items:
            if merged and lo <= merged[-1][1] + _gap_tol(merged[-1][1], tol):
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged))

    @classmethod
    def empty(cls) -> IntervalSet:
        return cls(())

    @classmethod
    def real_line(cls) -> IntervalSet:
        return cls(((-INF, INF),))

    @classmethod
    def half_line(cls, start: float = 0.0) -> IntervalSet:
        return cls(((float(start), INF),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_real_line(self) -> bool:
        return self.intervals == ((-INF, INF),)

    @property
    def endpoints(self) -> list[float]:
        return [v for iv in self.intervals for v in iv if math.isfinite(v)]

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self) -> Any:
        return iter(self.intervals)

    def contains(self, value: float, tol: float = 0.0) -> bool:
        """Membership, with the boundary widened by ``tol``."""
        return any(lo - tol <= value <= hi + tol for lo, hi in self.intervals)

    def __contains__(self, value: object) -> bool:
        return isinstance(value, (int, float)) and self.contains(float(value))

    def intersect(self, other: IntervalSet) -> IntervalSet:
        return intersect_all([self, other])

    def clip(self, lo: float = 0.0, hi: float = INF) -> IntervalSet:
        return intersect_all([self, IntervalSet(((float(lo), float(hi)),))])

    def union(self, other: IntervalSet) -> IntervalSet:
        return IntervalSet.from_intervals([*self.intervals, *other.intervals])

    def scale(self, factor: float) -> IntervalSet:
        """Image under phi -> factor * phi for factor > 0."""
        if not factor > 0:
            raise InvalidArgumentError(f"scale factor must be positive, got {factor}")
        return IntervalSet(tuple((lo * factor, hi * factor) for lo, hi in self.intervals))

    def measure(self) -> float:
        return math.fsum(hi - lo for lo, hi in self.intervals)

    def to_json(self) -> list[list[float | str]]:
        """JSON-safe form with "inf" / "-inf" sentinels."""
        return [[_encode(lo), _encode(hi)] for lo, hi in self.intervals]

    @classmethod
    def from_json(cls, data: Iterable[Sequence[float | str]]) -> IntervalSet:
        return cls.from_intervals((_decode(lo), _decode(hi)) for lo, hi in data)

    def __str__(self) -> str:
        if self.is_empty:
            return "{}"
        return " U ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in self.intervals)


def _sweep(
    lo: NDArray[np.float64],
    hi: NDArray[np.float64],
    n_sets: int,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Intervals covered by all ``n_sets`` sets, given the flattened members of each.

    Every set must be internally disjoint. Openings sort before closings at
    equal coordinates so that touching closed intervals share their endpoint.
    """
    coords = np.concatenate([lo, hi])
    kinds = np.concatenate([np.zeros(lo.size, dtype=np.int8), np.ones(hi.size, dtype=np.int8)])
    order = np.lexsort((kinds, coords))
    coords = coords[order]
    steps = np.where(kinds[order] == 0, 1, -1)
    depth = np.cumsum(steps)
    starts = np.flatnonzero(depth == n_sets)
    return coords[starts], coords[starts + 1]


def intersect_all(sets: Sequence[IntervalSet], merge_tol: float | None = None) -> IntervalSet:
    """Intersection of many interval sets by an endpoint sweep, O(M log M)."""
    active = [s for s in sets if not s.is_real_line]
    if not active:
        return IntervalSet.real_line()
    if any(s.is_empty for s in active):
        return IntervalSet.empty()
    lo = np.array([iv[0] for s in active for iv in s.intervals], dtype=np.float64)
    hi = np.array([iv[1] for s in active for iv in s.intervals], dtype=np.float64)
    starts, ends = _sweep(lo, hi, len(active))
    return IntervalSet.from_intervals(zip(starts, ends, strict=True), merge_tol=merge_tol)


@dataclass(frozen=True, slots=True)
class Quadratic:
    """a * phi^2 + b * phi + c."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        for name in ("a", "b", "c"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"quadratic coefficient {name} must be finite")

    def __call__(self, phi: float) -> float:
        return (self.a * phi + self.b) * phi + self.c

    def leq_set(self, tol: float | None = None) -> IntervalSet:
        return solve_quadratic_leq(self, tol)


def _stable_roots(
    a: NDArray[np.float64],
    b: NDArray[np.float64],
    c: NDArray[np.float64],
    disc: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Ordered real roots via q = -(b + sign(b) sqrt(disc)) / 2, avoiding cancellation."""
    sq = np.sqrt(np.maximum(disc, 0.0))
    qv = -0.5 * (b + np.where(b >= 0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = qv / a
        r2 = np.where(qv != 0.0, c / np.where(qv != 0.0, qv, 1.0), r1)
    return np.minimum(r1, r2), np.maximum(r1, r2)


@dataclass(frozen=True, slots=True)
class QuadraticSystem:
    """
    A batch of inequalities a_j phi^2 + b_j phi + c_j <= 0 solved together.

    The feasible set is the intersection of every member's solution set.
    """

    a: NDArray[np.float64]
    b: NDArray[np.float64]
    c: NDArray[np.float64]

    @classmethod
    def from_quadratics(cls, quads: Iterable[Quadratic]) -> QuadraticSystem:
        items = list(quads)
        return cls(
            np.array([q.a for q in items], dtype=np.float64),
            np.array([q.b for q in items], dtype=np.float64),
            np.array([q.c for q in items], dtype=np.float64),
        )

    @classmethod
    def concatenate(cls, systems: Sequence[QuadraticSystem]) -> QuadraticSystem:
        if not systems:
            empty = np.empty(0, dtype=np.float64)
            return cls(empty, empty, empty)
        return cls(
            np.concatenate([s.a for s in systems]),
            np.concatenate([s.b for s in systems]),
            np.concatenate([s.c for s in systems]),
        )

    def __len__(self) -> int:
        return int(self.a.size)

    def __getitem__(self, j: int) -> Quadratic:
        return Quadratic(float(self.a[j]), float(self.b[j]), float(self.c[j]))

    def feasible_set(
        self,
        tol: float | None = None,
        merge_tol: float | None = None,
        domain: Interval = (-INF, INF),
        phi_scale: float = 1.0,
    ) -> IntervalSet:
        """
        Solve every inequality and intersect the solutions with ``domain``.

        Degenerate coefficients are detected after substituting phi = phi_scale * u,
        so the classification does not depend on the units of the data. Pass a
        typical magnitude of phi, such as the observed statistic.
        """
        tol = settings.quadratic_tol if tol is None else tol
        if not (math.isfinite(phi_scale) and phi_scale > 0):
            raise InvalidArgumentError(f"phi_scale must be positive and finite, got {phi_scale}")
        if not (
            np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))
        ):
            raise InvalidArgumentError("quadratic coefficients must be finite")
        a = self.a * (phi_scale * phi_scale)
        b = self.b * phi_scale
        c = self.c
        domain = (domain[0] / phi_scale, domain[1] / phi_scale)

        scale_a = np.maximum(1.0, np.maximum(np.abs(b), np.abs(c)))
        is_linear = np.abs(a) <= tol * scale_a
        is_const = is_linear & (np.abs(b) <= tol * np.maximum(1.0, np.abs(c)))
        is_linear &= ~is_const
        is_quad = ~(is_linear | is_const)

        if np.any(is_const & (c > 0)):
            return IntervalSet.empty()

        disc = b * b - 4.0 * a * c
        up = is_quad & (a > 0)
        down = is_quad & (a < 0)
        if np.any(up & (disc < 0)):
            return IntervalSet.empty()

        los: list[NDArray[np.float64]] = [np.array([domain[0]])]
        his: list[NDArray[np.float64]] = [np.array([domain[1]])]
        n_sets = 1

        # b * phi + c <= 0
        lin_b, lin_c = b[is_linear], c[is_linear]
        root = -lin_c / lin_b
        pos = lin_b > 0
        los.append(np.where(pos, -INF, root))
        his.append(np.where(pos, root, INF))
        n_sets += int(is_linear.sum())

        # upward parabola: between the roots
        r_lo, r_hi = _stable_roots(a[up], b[up], c[up], disc[up])
        los.append(r_lo)
        his.append(r_hi)
        n_sets += int(up.sum())

        # downward parabola with two distinct roots: outside them; otherwise everything
        two = down & (disc > 0)
        r_lo, r_hi = _stable_roots(a[two], b[two], c[two], disc[two])
        los.append(np.concatenate([np.full(r_lo.size, -INF), r_hi]))
        his.append(np.concatenate([r_lo, np.full(r_hi.size, INF)]))
        n_sets += int(two.sum())

        starts, ends = _sweep(np.concatenate(los), np.concatenate(his), n_sets)
        region = IntervalSet.from_intervals(zip(starts, ends, strict=True), merge_tol=merge_tol)
        return region if phi_scale == 1.0 else region.scale(phi_scale)


def solve_quadratic_leq(quad: Quadratic, tol: float | None = None) -> IntervalSet:
    """
    {phi : a phi^2 + b phi + c <= 0}.

    Coefficients below ``tol`` relative to the others are treated as zero, so
    near-linear and near-constant inequalities stay well conditioned.
    """
    return QuadraticSystem(
        np.array([quad.a]), np.array([quad.b]), np.array([quad.c])
    ).feasible_set(tol=tol)


def as_interval_set(value: IntervalSet | ArrayLike) -> IntervalSet:
    if isinstance(value, IntervalSet):
        return value
    arr = np.asarray(value, dtype=np.float64).reshape(-1, 2)
    return IntervalSet.from_intervals(arr.tolist())
