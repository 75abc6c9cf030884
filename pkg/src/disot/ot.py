"""Exact discrete optimal transport: value, coupling, dual potentials, c-transforms.

The workhorse is a primal network simplex on the bipartite transportation
graph (:func:`transport`).  It returns a vertex coupling together with exact
dual potentials normalized so the first row potential is zero.  A dense LP
fallback via scipy covers the (never observed) event of a pivot-limit hit.
:func:`brute_force_ot` is an independent oracle that enumerates transportation
polytope vertices in exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateInput, LPInfeasible, SupportOutOfRange, TooLarge
from .measures import DiscreteMeasure, GroundCost

# optimality tolerance on reduced costs, relative to the cost scale
_OPT_TOL = 1e-11

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class Coupling:
    """Nonnegative matrix with prescribed row and column marginals."""

    gamma: np.ndarray
    row_ids: np.ndarray
    col_ids: np.ndarray

    def marginal_residual(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        r = np.abs(self.gamma.sum(axis=1) - mu.weights).max()
        c = np.abs(self.gamma.sum(axis=0) - nu.weights).max()
        return float(max(r, c))


@dataclass(frozen=True)
class OTResult:
    """Optimal value (p-th power), coupling and dual potentials.

    Sign convention: -phi(u) - psi(v) <= d(u, v)**p on support pairs, with
    sum(mu * -phi) + sum(nu * -psi) equal to ``value_p``.  ``phi`` is pinned to
    zero at the first support atom of mu.
    """

    value_p: float
    coupling: Coupling
    phi: np.ndarray
    psi: np.ndarray
    p: float

    @property
    def mk(self) -> float:
        """The distance itself, value_p ** (1/p)."""
        return self.value_p ** (1.0 / self.p) if self.p != 1.0 else self.value_p


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = a.size, b.size
    gamma = np.zeros((m, n))
    basis: list[tuple[int, int]] = []
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        t = min(ra[i], rb[j])
        gamma[i, j] = t
        basis.append((i, j))
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if ra[i] <= 0.0 and i < m - 1:
            i += 1
        else:
            j += 1
    return gamma, basis


def _tree_potentials(cost, basis_rows, basis_cols, m, n):
    """u, v with u[i] + v[j] = cost[i, j] on basic cells, rooted at u[0] = 0."""
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    stack = [(0, True)]
    while stack:
        node, is_row = stack.pop()
        if is_row:
            for j in basis_rows[node]:
                if math.isnan(v[j]):
                    v[j] = cost[node, j] - u[node]
                    stack.append((j, False))
        else:
            for i in basis_cols[node]:
                if math.isnan(u[i]):
                    u[i] = cost[i, node] - v[node]
                    stack.append((i, True))
    return u, v


def _tree_path(start_row, target_col, basis_rows, basis_cols):
    """Unique path of basic cells from a row node to a column node."""
    parent: dict[tuple[bool, int], tuple[bool, int]] = {}
    seen = {(True, start_row)}
    stack = [(True, start_row)]
    while stack:
        is_row, node = stack.pop()
        if not is_row and node == target_col:
            path_nodes = [(False, node)]
            while path_nodes[-1] in parent:
                path_nodes.append(parent[path_nodes[-1]])
            path_nodes.reverse()
            edges = []
            for (ar, an), (br, bn) in zip(path_nodes, path_nodes[1:]):
                edges.append((an, bn) if ar else (bn, an))
            return edges
        neighbors = (
            ((False, j) for j in basis_rows[node])
            if is_row
            else ((True, i) for i in basis_cols[node])
        )
        for nxt in neighbors:
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = (is_row, node)
                stack.append(nxt)
    raise LPInfeasible("basis lost tree connectivity")  # pragma: no cover


def transport(cost: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Minimize <gamma, cost> over couplings of weight vectors a and b.

    Zero entries in a or b are allowed (their rows/columns stay basic with
    zero allocation, and their duals remain meaningful subgradients).

    Returns (value, gamma, u, v, basis) where u, v are optimal dual potentials
    with u[0] = 0 and u[i] + v[j] <= cost[i, j] up to the pivot tolerance, and
    basis is the optimal spanning tree as a list of cells.
    """
    cost = np.asarray(cost, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = cost.shape
    gamma, basis = _northwest_corner(a, b)
    basis_rows: list[set[int]] = [set() for _ in range(m)]
    basis_cols: list[set[int]] = [set() for _ in range(n)]
    for i, j in basis:
        basis_rows[i].add(j)
        basis_cols[j].add(i)
    tol = _OPT_TOL * max(1.0, float(np.abs(cost).max(initial=0.0)))
    max_pivots = 200 * (m + n) + 2000
    degenerate_run = 0
    bland_after = 10 * (m + n) + 50

    for _ in range(max_pivots):
        u, v = _tree_potentials(cost, basis_rows, basis_cols, m, n)
        reduced = cost - u[:, None] - v[None, :]
        if degenerate_run < bland_after:
            flat = int(np.argmin(reduced))
            ei, ej = divmod(flat, n)
            if reduced[ei, ej] >= -tol:
                break
        else:
            # Bland's rule: first improving cell in row-major order
            cand = np.argwhere(reduced < -tol)
            if cand.size == 0:
                break
            ei, ej = int(cand[0][0]), int(cand[0][1])
        path = _tree_path(ei, ej, basis_rows, basis_cols)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(gamma[i, j] for i, j in minus)
        leaving = min((i, j) for i, j in minus if gamma[i, j] == theta)
        gamma[ei, ej] += theta
        for i, j in plus:
            gamma[i, j] += theta
        for i, j in minus:
            gamma[i, j] -= theta
        gamma[leaving] = 0.0
        basis_rows[leaving[0]].discard(leaving[1])
        basis_cols[leaving[1]].discard(leaving[0])
        basis_rows[ei].add(ej)
        basis_cols[ej].add(ei)
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
    else:  # pragma: no cover - safety net
        return _transport_linprog(cost, a, b)

    value = math.fsum((gamma * cost).ravel().tolist())
    basis = [(i, j) for i in range(m) for j in basis_rows[i]]
    return value, gamma, u, v, basis


def _transport_linprog(cost, a, b):  # pragma: no cover - fallback path
    """Dense LP fallback through scipy's HiGHS simplex."""
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    m, n = cost.shape
    rows, cols, data = [], [], []
    for i in range(m):
        for j in range(n):
            k = i * n + j
            rows.append(i)
            cols.append(k)
            data.append(1.0)
            if j < n - 1:
                rows.append(m + j)
                cols.append(k)
                data.append(1.0)
    A = coo_matrix((data, (rows, cols)), shape=(m + n - 1, m * n))
    beq = np.concatenate([a, b[:-1]])
    res = linprog(cost.ravel(), A_eq=A, b_eq=beq, method="highs")
    if res.status != 0:
        raise LPInfeasible(f"transport LP failed with status {res.status}")
    gamma = res.x.reshape(m, n)
    y = res.eqlin.marginals
    u = y[:m]
    v = np.append(y[m:], 0.0)
    v = v + u[0]
    u = u - u[0]
    value = math.fsum((gamma * cost).ravel().tolist())
    basis = [(int(i), int(j)) for i, j in zip(*np.nonzero(gamma))]
    return value, gamma, u, v, basis


def exact_basis_value(cost: np.ndarray, a: np.ndarray, b: np.ndarray, basis) -> float:
    """Objective of the basic solution carried by a spanning-tree basis.

    The allocations are re-derived from the marginals by leaf elimination in
    exact rational arithmetic and the cost sum rounded once, so the value is
    independent of pivot order and of any relabeling of the points.  Both
    marginals are first rescaled to exact total mass 1, which removes their
    ~1e-16 float imbalance symmetrically.
    """
    m, n = cost.shape
    adj_r: list[set[int]] = [set() for _ in range(m)]
    adj_c: list[set[int]] = [set() for _ in range(n)]
    for i, j in basis:
        adj_r[i].add(j)
        adj_c[j].add(i)
    ra = [Fraction(float(x)) for x in a]
    rb = [Fraction(float(x)) for x in b]
    ta, tb = sum(ra), sum(rb)
    ra = [x / ta for x in ra]
    rb = [x / tb for x in rb]
    total = Fraction(0)
    stack = [(True, i) for i in range(m) if len(adj_r[i]) == 1]
    stack += [(False, j) for j in range(n) if len(adj_c[j]) == 1]
    remaining = len(basis)
    while stack and remaining:
        is_row, node = stack.pop()
        adj = adj_r[node] if is_row else adj_c[node]
        if len(adj) != 1:
            continue
        other = next(iter(adj))
        if is_row:
            alloc = ra[node]
            total += alloc * Fraction(float(cost[node, other]))
            rb[other] -= alloc
            ra[node] = Fraction(0)
            adj_r[node].discard(other)
            adj_c[other].discard(node)
            if len(adj_c[other]) == 1:
                stack.append((False, other))
        else:
            alloc = rb[node]
            total += alloc * Fraction(float(cost[other, node]))
            ra[other] -= alloc
            rb[node] = Fraction(0)
            adj_c[node].discard(other)
            adj_r[other].discard(node)
            if len(adj_r[other]) == 1:
                stack.append((True, other))
        remaining -= 1
    return float(total)


def _check_supports(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost):
    if mu is None or nu is None or len(mu) == 0 or len(nu) == 0:
        raise DegenerateInput("both measures must carry at least one atom")
    for meas, name in ((mu, "mu"), (nu, "nu")):
        if meas.point_ids.size and int(meas.point_ids[-1]) >= cost.n:
            raise SupportOutOfRange(
                f"{name} has atom {int(meas.point_ids[-1])} outside point set of size {cost.n}"
            )


def solve_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost, p: float) -> OTResult:
    """Exact p-cost optimal transport between two discrete measures.

    Returns the optimal value of sum(gamma * d**p), an optimal vertex coupling,
    and dual potentials (phi, psi) satisfying -phi(u) - psi(v) <= d(u, v)**p
    with phi zero at mu's first support atom.  The distance itself is
    ``result.mk`` = value_p ** (1/p).
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    _check_supports(mu, nu, cost)
    sub = cost.submatrix(mu.point_ids, nu.point_ids)
    cp = sub if p == 1.0 else sub**p
    _, gamma, u, v, basis = transport(cp, mu.weights, nu.weights)
    # nonnegative costs make the optimum nonnegative; the exact recompute can
    # surface ~1e-18 noise from degenerate bases, which would break ** (1/p)
    value = max(0.0, exact_basis_value(cp, mu.weights, nu.weights, basis))
    coupling = Coupling(gamma, mu.point_ids, nu.point_ids)
    residual = coupling.marginal_residual(mu, nu)
    if residual > MARGINAL_TOL:
        raise LPInfeasible(f"coupling marginals off by {residual}")
    return OTResult(value_p=value, coupling=coupling, phi=-u, psi=-v, p=p)


def _vertex_min_exact(a, b, costs):
    """Exact LP minimum by enumerating greedy saturation orders (all vertices)."""
    # float weight vectors carry ~1e-16 mass imbalance; absorb it in the last
    # column so the rational recursion is exactly balanced
    imbalance = sum(a) - sum(b)
    b = b[:-1] + (b[-1] + imbalance,)
    memo: dict[tuple, Fraction] = {}
    zero = Fraction(0)

    def rec(ra: tuple, rb: tuple) -> Fraction:
        if all(x == 0 for x in ra):
            return zero
        key = (ra, rb)
        hit = memo.get(key)
        if hit is not None:
            return hit
        best = None
        for i, ai in enumerate(ra):
            if ai == 0:
                continue
            for j, bj in enumerate(rb):
                if bj == 0:
                    continue
                t = ai if ai <= bj else bj
                na = ra[:i] + (ai - t,) + ra[i + 1 :]
                nb = rb[:j] + (bj - t,) + rb[j + 1 :]
                c = t * costs[i][j] + rec(na, nb)
                if best is None or c < best:
                    best = c
        memo[key] = best
        return best

    return rec(a, b)


def brute_force_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost, p: float) -> float:
    """Independent oracle for solve_ot's value on small instances.

    General case (supports of size <= 4 each): enumerates the vertices of the
    transportation polytope via greedy saturation orders in exact rational
    arithmetic.  Uniform case with equal atom counts <= 8: minimizes over all
    permutation couplings.  Anything larger raises TooLarge.
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    _check_supports(mu, nu, cost)
    m, n = len(mu), len(nu)
    sub = cost.submatrix(mu.point_ids, nu.point_ids)
    cp = sub if p == 1.0 else sub**p

    uniform_equal = (
        m == n
        and bool(np.all(mu.weights == mu.weights[0]))
        and bool(np.all(nu.weights == nu.weights[0]))
        and abs(mu.weights[0] - nu.weights[0]) == 0.0
    )
    if uniform_equal and n <= 8:
        best_perm = None
        best = math.inf
        rows = np.arange(n)
        for perm in itertools.permutations(range(n)):
            c = float(cp[rows, perm].sum())
            if c < best:
                best = c
                best_perm = perm
        exact = math.fsum(cp[i, j] for i, j in zip(rows, best_perm))
        return float(mu.weights[0]) * exact
    if m <= 4 and n <= 4:
        a = tuple(Fraction(float(x)) for x in mu.weights)
        b = tuple(Fraction(float(x)) for x in nu.weights)
        costs = tuple(tuple(Fraction(float(c)) for c in row) for row in cp)
        return float(_vertex_min_exact(a, b, costs))
    raise TooLarge(
        f"supports {m}x{n} exceed the enumeration bounds (4x4 general, 8x8 uniform-equal)"
    )


def c_transform(
    xi: np.ndarray, lam: float, p: float, cost: GroundCost, domain: np.ndarray | None = None
) -> np.ndarray:
    """Discrete transform u -> max_v (-lam * d(u, v)**p - xi(v)).

    xi holds one value per fiber point (or per ``domain`` entry when a domain
    restriction is given); the result has one value per fiber point.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError("lam must lie in (0, 1]")
    if p < 1.0:
        raise ValueError("p must be >= 1")
    xi = np.asarray(xi, dtype=np.float64)
    if not np.all(np.isfinite(xi)):
        raise ValueError("potential has non-finite entries")
    dp = cost.powered(p)
    cols = dp if domain is None else dp[:, domain]
    if xi.size != cols.shape[1]:
        raise ValueError("potential length does not match the transform domain")
    return (-lam * cols - xi[None, :]).max(axis=1)


def coupling_is_deterministic(c: Coupling, tol: float) -> dict[int, int] | None:
    """Extract the transport map if each coupling row is concentrated.

    Returns {source point id: target point id} when every row has at most one
    entry above tol times its row mass, None otherwise.
    """
    gamma = c.gamma
    out: dict[int, int] = {}
    for r in range(gamma.shape[0]):
        row = gamma[r]
        mass = row.sum()
        if mass <= 0.0:
            continue
        if int(np.count_nonzero(row > tol * mass)) > 1:
            return None
        out[int(c.row_ids[r])] = int(c.col_ids[int(row.argmax())])
    return out
