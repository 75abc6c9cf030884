"""Discrete and fibered measures: construction, validation, disintegration, moments.

A measure lives on a finite point set indexed 0..n-1 whose pairwise distances
are recorded in a :class:`GroundCost`.  A fibered measure couples a base
weighting ``sigma`` with one conditional measure per base point.  All types are
immutable after construction and safe to share across concurrent solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AllZeroMass,
    BaseMismatch,
    IndexOutOfRange,
    InvalidGroundCost,
    NegativeWeight,
)

# Inputs whose total mass differs from 1 by more than this are still rescaled,
# but constructed objects always carry weights summing to 1 within it.
MASS_TOL = 1e-12

TRIANGLE_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    """One structural defect found by a validator."""

    kind: str
    location: tuple
    magnitude: float
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a report-based check: empty ``violations`` means valid."""

    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def worst(self, kind: str | None = None) -> Violation | None:
        pool = [v for v in self.violations if kind is None or v.kind == kind]
        return max(pool, key=lambda v: v.magnitude) if pool else None


class DiscreteMeasure:
    """Probability measure with finitely many atoms on an indexed point set.

    Construction normalizes: duplicate point ids are merged by summing their
    weights, zero-weight atoms are pruned, and weights are rescaled to total
    mass 1.  Atoms are kept sorted by point id.

    Raises
    ------
    NegativeWeight
        if any input weight is negative.
    AllZeroMass
        if the total input mass is not strictly positive.
    """

    __slots__ = ("point_ids", "weights")

    def __init__(self, point_ids: Sequence[int], weights: Sequence[float]):
        ids = np.asarray(point_ids, dtype=np.int64)
        w = np.asarray(weights, dtype=np.float64)
        if ids.shape != w.shape or ids.ndim != 1:
            raise ValueError("point_ids and weights must be 1-d and equally long")
        if w.size and w.min() < 0.0:
            i = int(w.argmin())
            raise NegativeWeight(f"weight {w[i]} at point {ids[i]}")
        order = np.argsort(ids, kind="stable")
        ids, w = ids[order], w[order]
        # merge duplicates
        uniq, inverse = np.unique(ids, return_inverse=True)
        if uniq.size != ids.size:
            merged = np.zeros(uniq.size)
            np.add.at(merged, inverse, w)
            ids, w = uniq, merged
        keep = w > 0.0
        ids, w = ids[keep], w[keep]
        total = math.fsum(w)
        if total <= 0.0:
            raise AllZeroMass("measure has no positive mass")
        w = w / total
        # denormal inputs can underflow to zero under the rescale
        keep = w > 0.0
        ids, w = ids[keep], w[keep]
        ids.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    def __len__(self) -> int:
        return self.point_ids.size

    def __repr__(self) -> str:
        atoms = ", ".join(f"{i}: {w:.6g}" for i, w in zip(self.point_ids, self.weights))
        return f"DiscreteMeasure({{{atoms}}})"

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(w) for i, w in zip(self.point_ids, self.weights)}

    def dense(self, n: int) -> np.ndarray:
        """Weight vector over the full point set 0..n-1."""
        if self.point_ids.size and self.point_ids[-1] >= n:
            raise IndexOutOfRange(f"atom {self.point_ids[-1]} outside point set of size {n}")
        out = np.zeros(n)
        out[self.point_ids] = self.weights
        return out

    def is_dirac(self) -> bool:
        return len(self) == 1

    def almost_equal(self, other: "DiscreteMeasure", tol: float = MASS_TOL) -> bool:
        return (
            self.point_ids.shape == other.point_ids.shape
            and bool(np.all(self.point_ids == other.point_ids))
            and bool(np.all(np.abs(self.weights - other.weights) <= tol))
        )


def normalize_measure(raw_atoms: Iterable[tuple[int, float]]) -> DiscreteMeasure:
    """Build a DiscreteMeasure from (point_id, weight) pairs.

    Duplicates are merged, zero atoms pruned, weights rescaled to sum to 1.
    """
    pairs = list(raw_atoms)
    ids = [p for p, _ in pairs]
    ws = [w for _, w in pairs]
    return DiscreteMeasure(ids, ws)


def dirac(point_id: int) -> DiscreteMeasure:
    return DiscreteMeasure([point_id], [1.0])


class GroundCost:
    """Symmetric nonnegative matrix of pairwise distances on a finite point set.

    The matrix is stored raw; solvers apply the p-th power at solve time so a
    single GroundCost serves every exponent.  The triangle inequality is not
    enforced at construction unless ``check_triangle`` is set; use
    :func:`validate_ground_cost` for a full report.
    """

    __slots__ = ("d", "n")

    def __init__(self, d: Sequence[Sequence[float]] | np.ndarray, check_triangle: bool = False):
        mat = np.array(d, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidGroundCost("cost matrix must be square")
        if mat.size and mat.min() < 0.0:
            raise InvalidGroundCost("cost matrix has negative entries")
        if np.any(np.diag(mat) != 0.0):
            raise InvalidGroundCost("cost matrix has nonzero diagonal")
        if not np.array_equal(mat, mat.T):
            raise InvalidGroundCost("cost matrix is not symmetric")
        if check_triangle:
            rep = validate_ground_cost(mat)
            bad = rep.worst("triangle")
            if bad is not None:
                raise InvalidGroundCost(
                    f"triangle inequality fails at {bad.location} by {bad.magnitude}"
                )
        mat.setflags(write=False)
        object.__setattr__(self, "d", mat)
        object.__setattr__(self, "n", mat.shape[0])

    def __setattr__(self, name, value):
        raise AttributeError("GroundCost is immutable")

    def powered(self, p: float) -> np.ndarray:
        """d**p, with p == 1 returned without a pow call."""
        if p == 1.0:
            return self.d
        return self.d**p

    def submatrix(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return self.d[np.ix_(rows, cols)]


def validate_ground_cost(d: Sequence[Sequence[float]] | np.ndarray) -> ValidationReport:
    """Check metric-space axioms on a square matrix and report every violation.

    Reported kinds: ``shape``, ``negativity``, ``diagonal``, ``symmetry`` and
    ``triangle``.  For triangle violations the entry with the worst slack
    ``d[i,k] - d[i,j] - d[j,k]`` is reported per intermediate point j.
    """
    mat = np.asarray(d, dtype=np.float64)
    out: list[Violation] = []
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return ValidationReport((Violation("shape", mat.shape, 0.0, "matrix is not square"),))
    n = mat.shape[0]
    for i, j in zip(*np.nonzero(mat < 0.0)):
        out.append(Violation("negativity", (int(i), int(j)), float(-mat[i, j])))
    for i in range(n):
        if mat[i, i] != 0.0:
            out.append(Violation("diagonal", (i, i), float(abs(mat[i, i]))))
    asym = mat - mat.T
    for i, j in zip(*np.nonzero(asym)):
        if i < j:
            out.append(Violation("symmetry", (int(i), int(j)), float(abs(asym[i, j]))))
    # triangle: d[i,k] <= d[i,j] + d[j,k] for every triple, slack tolerance 1e-9
    for j in range(n):
        slack = mat - (mat[:, j : j + 1] + mat[j : j + 1, :])
        slack[j, :] = -np.inf
        slack[:, j] = -np.inf
        np.fill_diagonal(slack, -np.inf)
        worst = float(slack.max()) if n > 1 else -np.inf
        if worst > TRIANGLE_TOL:
            i, k = np.unravel_index(int(slack.argmax()), slack.shape)
            out.append(
                Violation(
                    "triangle",
                    (int(i), int(j), int(k)),
                    worst,
                    f"d[{i},{k}] > d[{i},{j}] + d[{j},{k}] by {worst:.3g}",
                )
            )
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class ReferencePoint:
    """Designated fiber point: one shared index, or one index per base point."""

    y0: int | None = None
    per_fiber: Mapping[str, int] | None = None

    def index_for(self, base_id: str) -> int:
        if self.per_fiber is not None and base_id in self.per_fiber:
            return int(self.per_fiber[base_id])
        if self.y0 is None:
            raise IndexOutOfRange(f"no reference index for base point {base_id!r}")
        return int(self.y0)


class Bundle:
    """Finite base points, each carrying a fiber point set with a ground cost.

    When every fiber shares one point set and cost (``shared_fiber``), optional
    per-base relabelings may be given.  A relabeling is a permutation g of the
    shared point set and must preserve the cost exactly: d[g(i), g(j)] == d[i, j].
    """

    __slots__ = ("base_ids", "_costs", "_points", "shared_fiber", "relabelings")

    def __init__(
        self,
        base_ids: Sequence[str],
        costs: GroundCost | Mapping[str, GroundCost],
        points: Sequence | Mapping[str, Sequence] | None = None,
        relabelings: Mapping[str, Sequence[int]] | None = None,
    ):
        bids = tuple(str(b) for b in base_ids)
        shared = isinstance(costs, GroundCost)
        if not shared and relabelings:
            raise InvalidGroundCost("relabelings require a shared fiber")
        perms: dict[str, np.ndarray] = {}
        if relabelings:
            d = costs.d  # type: ignore[union-attr]
            for bid, perm in relabelings.items():
                g = np.asarray(perm, dtype=np.int64)
                if sorted(g.tolist()) != list(range(d.shape[0])):
                    raise InvalidGroundCost(f"relabeling at {bid!r} is not a permutation")
                if not np.array_equal(d[np.ix_(g, g)], d):
                    raise InvalidGroundCost(f"relabeling at {bid!r} does not preserve the cost")
                g.setflags(write=False)
                perms[str(bid)] = g
        object.__setattr__(self, "base_ids", bids)
        object.__setattr__(self, "_costs", costs)
        object.__setattr__(self, "_points", points)
        object.__setattr__(self, "shared_fiber", shared)
        object.__setattr__(self, "relabelings", perms)

    def __setattr__(self, name, value):
        raise AttributeError("Bundle is immutable")

    def cost(self, base_id: str) -> GroundCost:
        if self.shared_fiber:
            return self._costs  # type: ignore[return-value]
        try:
            return self._costs[base_id]  # type: ignore[index]
        except KeyError:
            raise BaseMismatch(f"no fiber cost for base point {base_id!r}") from None

    def points(self, base_id: str):
        if self._points is None:
            return None
        if self.shared_fiber:
            return self._points
        return self._points.get(base_id)  # type: ignore[union-attr]

    def relabel(self, base_id: str, index: int) -> int:
        g = self.relabelings.get(base_id)
        return int(g[index]) if g is not None else index


class FiberedMeasure:
    """Base weights ``sigma`` plus one conditional DiscreteMeasure per base point.

    Base points with zero sigma carry no fiber measure and are dropped, so the
    pushforward onto the base equals sigma by construction and every stored
    fiber sums to 1.
    """

    __slots__ = ("base_ids", "sigma", "fibers")

    def __init__(self, base_ids: Sequence[str], sigma: Sequence[float], fibers: Mapping[str, DiscreteMeasure]):
        bids = [str(b) for b in base_ids]
        s = np.asarray(sigma, dtype=np.float64)
        if len(bids) != s.size:
            raise BaseMismatch("base_ids and sigma lengths differ")
        if s.size and s.min() < 0.0:
            raise NegativeWeight("negative base weight")
        total = math.fsum(s)
        if total <= 0.0:
            raise AllZeroMass("base weights have no positive mass")
        s = s / total
        keep = s > 0.0
        bids = [b for b, k in zip(bids, keep) if k]
        s = s[keep]
        fib = {}
        for b in bids:
            if b not in fibers:
                raise BaseMismatch(f"base point {b!r} has positive mass but no fiber measure")
            fib[b] = fibers[b]
        s.setflags(write=False)
        object.__setattr__(self, "base_ids", tuple(bids))
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "fibers", fib)

    def __setattr__(self, name, value):
        raise AttributeError("FiberedMeasure is immutable")

    def sigma_at(self, base_id: str) -> float:
        try:
            return float(self.sigma[self.base_ids.index(str(base_id))])
        except ValueError:
            return 0.0

    def fiber(self, base_id: str) -> DiscreteMeasure:
        try:
            return self.fibers[str(base_id)]
        except KeyError:
            raise BaseMismatch(f"no fiber at base point {base_id!r} (sigma = 0)") from None

    def same_base(self, other: "FiberedMeasure", tol: float = MASS_TOL) -> bool:
        return self.base_ids == other.base_ids and bool(
            np.all(np.abs(self.sigma - other.sigma) <= tol)
        )

    def atoms(self) -> list[tuple[str, int, float]]:
        """Flat (base_id, fiber_point_id, weight) list reconstructing the measure."""
        out = []
        for b, s in zip(self.base_ids, self.sigma):
            f = self.fibers[b]
            for i, w in zip(f.point_ids, f.weights):
                out.append((b, int(i), float(s * w)))
        return out


def disintegrate(atoms_on_total_space: Iterable[tuple[str, int, float]]) -> FiberedMeasure:
    """Split atoms (base_id, fiber_point_id, weight) into sigma and conditionals.

    sigma[b] is the total mass over base point b; the fiber at b is the
    conditional measure (weights divided by sigma[b]).  Reconstructing through
    :meth:`FiberedMeasure.atoms` reproduces the input up to merging, pruning
    and 1e-12 arithmetic.
    """
    grouped: dict[str, list[tuple[int, float]]] = {}
    order: list[str] = []
    for b, i, w in atoms_on_total_space:
        b = str(b)
        if w < 0.0:
            raise NegativeWeight(f"weight {w} at ({b!r}, {i})")
        if b not in grouped:
            grouped[b] = []
            order.append(b)
        grouped[b].append((int(i), float(w)))
    masses = {b: math.fsum(w for _, w in pairs) for b, pairs in grouped.items()}
    total = math.fsum(masses.values())
    if total <= 0.0:
        raise AllZeroMass("atoms carry no positive mass")
    base_ids = [b for b in order if masses[b] > 0.0]
    sigma = [masses[b] for b in base_ids]
    fibers = {b: normalize_measure(grouped[b]) for b in base_ids}
    return FiberedMeasure(base_ids, sigma, fibers)


def reference_delta(
    bundle: Bundle, y0: ReferencePoint | int, sigma: Mapping[str, float] | Sequence[float]
) -> FiberedMeasure:
    """Fibered measure whose fiber at each base point is the Dirac at (relabeled) y0."""
    ref = ReferencePoint(y0) if isinstance(y0, int) else y0
    if isinstance(sigma, Mapping):
        base_ids = list(bundle.base_ids)
        svals = [float(sigma.get(b, 0.0)) for b in base_ids]
    else:
        base_ids = list(bundle.base_ids)
        svals = [float(s) for s in sigma]
        if len(svals) != len(base_ids):
            raise BaseMismatch("sigma length does not match bundle base points")
    fibers = {}
    for b, s in zip(base_ids, svals):
        if s <= 0.0:
            continue
        idx = ref.index_for(b)
        n = bundle.cost(b).n
        if not 0 <= idx < n:
            raise IndexOutOfRange(f"reference index {idx} outside fiber of size {n} at {b!r}")
        fibers[b] = dirac(bundle.relabel(b, idx))
    return FiberedMeasure(base_ids, svals, fibers)


def p_moment(m: FiberedMeasure, ref: FiberedMeasure, bundle: Bundle, p: float) -> float:
    """sigma-average of the p-th moment of each fiber about the reference Dirac.

    ``ref`` must share base weights with ``m`` and have Dirac fibers.  Always
    finite on finite supports.
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    if not m.same_base(ref):
        raise BaseMismatch("m and ref have different base weights")
    terms = []
    for b, s in zip(m.base_ids, m.sigma):
        rf = ref.fiber(b)
        if not rf.is_dirac():
            raise BaseMismatch(f"reference fiber at {b!r} is not a Dirac")
        y = int(rf.point_ids[0])
        cost = bundle.cost(b)
        f = m.fiber(b)
        if f.point_ids.size and f.point_ids[-1] >= cost.n:
            raise IndexOutOfRange(f"fiber atoms at {b!r} outside the point set")
        dist = cost.d[y, f.point_ids]
        dp = dist if p == 1.0 else dist**p
        terms.append(s * float(np.dot(dp, f.weights)))
    return math.fsum(terms)
