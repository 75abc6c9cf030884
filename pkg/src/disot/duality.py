"""Dual certificates for barycenter problems: validation, evaluation, extraction.

A certificate is one pair (zeta_k, xi_k) per input: strictly positive base
weights zeta_k with unit-bounded L^{r'}(sigma) norm and per-fiber potentials
xi_k on the candidate support whose zeta-weighted sum vanishes pointwise.  Its
dual value, a transform-and-integrate functional, lower-bounds the barycenter
objective of every feasible candidate (weak duality); a zero gap certifies
optimality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .barycenter import BarycenterProblem, BarycenterResult, fiber_barycenter_lp, objective
from .errors import LPInfeasible, NotSolved, ShapeMismatch
from .measures import ValidationReport, Violation
from .metric import cost_at, fiber_distance_profile
from .ot import c_transform

# strict positivity of zeta is kept by flooring before normalization
ZETA_FLOOR = 1e-12

SUM_TOL = 1e-9
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DualCertificate:
    """Feasible dual variables (zeta_k, xi_k), k = 1..K.

    ``zeta`` is K x B over the problem's base points; ``xi[k][base_id]`` holds
    one value per candidate support point of that fiber.  The derived product
    eta_k(w, v) = zeta_k(w) * xi_k(w, v) sums to zero over k at every (w, v).
    """

    base_ids: tuple[str, ...]
    zeta: np.ndarray
    xi: tuple[Mapping[str, np.ndarray], ...]

    @property
    def K(self) -> int:
        return len(self.xi)

    def eta(self, k: int, base_id: str) -> np.ndarray:
        b = self.base_ids.index(base_id)
        return self.zeta[k, b] * self.xi[k][base_id]

    def to_dict(self) -> dict:
        return {
            "zeta": {
                str(k + 1): {b: float(self.zeta[k, i]) for i, b in enumerate(self.base_ids)}
                for k in range(self.K)
            },
            "xi": {
                str(k + 1): {b: [float(x) for x in self.xi[k][b]] for b in self.base_ids}
                for k in range(self.K)
            },
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "DualCertificate":
        zeta_map = payload["zeta"]
        xi_map = payload["xi"]
        ks = sorted(zeta_map, key=int)
        base_ids = tuple(zeta_map[ks[0]].keys())
        zeta = np.array([[float(zeta_map[k][b]) for b in base_ids] for k in ks])
        xi = tuple(
            {b: np.asarray(xi_map[k][b], dtype=np.float64) for b in base_ids} for k in ks
        )
        return cls(base_ids=base_ids, zeta=zeta, xi=xi)


@dataclass(frozen=True)
class GapReport:
    """Primal value, certified dual lower bound, and their difference."""

    primal: float
    dual: float
    gap: float
    certified: bool
    tol: float


def _zeta_norm(zeta_row: np.ndarray, sigma: np.ndarray, r_conj: float) -> float:
    if math.isinf(r_conj):
        return float(zeta_row.max())
    if r_conj == 1.0:
        return math.fsum(sigma * zeta_row)
    return math.fsum(sigma * zeta_row**r_conj) ** (1.0 / r_conj)


def _check_shapes(cert: DualCertificate, problem: BarycenterProblem):
    if cert.base_ids != problem.base_ids:
        raise ShapeMismatch("certificate base points do not match the problem")
    if cert.zeta.shape != (problem.K, len(problem.base_ids)) or cert.K != problem.K:
        raise ShapeMismatch("certificate has the wrong number of inputs or base points")
    for k in range(problem.K):
        for b in problem.base_ids:
            if cert.xi[k][b].shape != (problem.support[b].size,):
                raise ShapeMismatch(f"xi[{k}][{b!r}] does not match the support size")


def validate_certificate(cert: DualCertificate, problem: BarycenterProblem) -> ValidationReport:
    """Check positivity, the L^{r'}(sigma) norm bound, and the pointwise sum.

    All violations are listed with their locations; no exceptions are raised
    for infeasibility, only for outright shape mismatches.
    """
    _check_shapes(cert, problem)
    out: list[Violation] = []
    r_conj = problem.config.r_conj
    sigma = problem.sigma
    for k in range(problem.K):
        row = cert.zeta[k]
        bad = np.nonzero(row <= 0.0)[0]
        for i in bad:
            out.append(
                Violation("positivity", (k, problem.base_ids[int(i)]), float(-row[int(i)]))
            )
        norm = _zeta_norm(row, sigma, r_conj)
        if norm > 1.0 + NORM_TOL:
            out.append(Violation("norm", (k,), float(norm - 1.0), f"|zeta_{k+1}| = {norm:.12g}"))
    for i, b in enumerate(problem.base_ids):
        total = np.zeros(problem.support[b].size)
        for k in range(problem.K):
            total += cert.zeta[k, i] * cert.xi[k][b]
        worst = int(np.abs(total).argmax()) if total.size else 0
        if total.size and abs(total[worst]) > SUM_TOL:
            out.append(
                Violation(
                    "sum",
                    (b, int(problem.support[b][worst])),
                    float(abs(total[worst])),
                    "sum_k zeta_k * xi_k != 0",
                )
            )
    return ValidationReport(tuple(out))


def eval_dual(cert: DualCertificate, problem: BarycenterProblem) -> float:
    """Dual functional value of a certificate.

    Per input and base point, the transform of xi_k is integrated against the
    input's fiber measure, weighted by zeta_k * sigma, summed and negated.
    Defined for any certificate of the right shape, feasible or not.
    """
    _check_shapes(cert, problem)
    p = problem.config.p
    terms = []
    for k, mk in enumerate(problem.inputs):
        lam = float(problem.lambdas[k])
        for i, b in enumerate(problem.base_ids):
            cost = cost_at(problem.costs, b)
            transform = c_transform(cert.xi[k][b], lam, p, cost, domain=problem.support[b])
            f = mk.fiber(b)
            integral = float(np.dot(f.weights, transform[f.point_ids]))
            terms.append(cert.zeta[k, i] * problem.sigma[i] * integral)
    return -math.fsum(terms)


def _zeta_finite_q(problem: BarycenterProblem, minimizer) -> np.ndarray:
    """Hoelder-aligned base weights zeta_k proportional to MK_p^(q-p)."""
    p, q = problem.config.p, problem.config.q
    r_conj = problem.config.r_conj
    K = problem.K
    B = len(problem.base_ids)
    zeta = np.ones((K, B))
    if q == p:
        return zeta
    for k, mk in enumerate(problem.inputs):
        prof = fiber_distance_profile(mk, minimizer, p, problem.costs)
        raw = np.array([d for _, d in prof]) ** (q - p)
        raw = np.maximum(raw, ZETA_FLOOR)
        zeta[k] = raw / _zeta_norm(raw, problem.sigma, r_conj)
    return zeta


def _zeta_minimax(problem: BarycenterProblem) -> np.ndarray:
    """Base weights for q = inf from the multipliers of the epigraph LP.

    The minimax problem min_w max_fiber MK_p^p is written with one epigraph
    variable per input; the optimal multipliers of the epigraph constraints,
    rescaled by lambda_k * sigma, are exactly the aligned zeta_k with unit
    L^1(sigma) norm.
    """
    p = problem.config.p
    base_ids = list(problem.base_ids)
    K = problem.K
    # variable layout: [gamma blocks (k major, fiber minor), w blocks, t (K)]
    g_off = {}
    offset = 0
    sizes = {}
    for k, mk in enumerate(problem.inputs):
        for b in base_ids:
            m = len(mk.fiber(b))
            s = problem.support[b].size
            g_off[(k, b)] = offset
            sizes[(k, b)] = (m, s)
            offset += m * s
    w_off = {}
    for b in base_ids:
        w_off[b] = offset
        offset += problem.support[b].size
    t_off = offset
    n_var = offset + K

    cvec = np.zeros(n_var)
    cvec[t_off : t_off + K] = problem.lambdas

    ub_rows, ub_cols, ub_data = [], [], []
    eq_rows, eq_cols, eq_data = [], [], []
    beq = []
    eq_row = 0
    ub_row = 0
    epi_rows = {}
    for k, mk in enumerate(problem.inputs):
        for b in base_ids:
            m, s = sizes[(k, b)]
            f = mk.fiber(b)
            cost = cost_at(problem.costs, b)
            sub = cost.submatrix(f.point_ids, problem.support[b])
            cp = (sub if p == 1.0 else sub**p).ravel()
            base = g_off[(k, b)]
            # epigraph: <gamma, cp> - t_k <= 0
            for idx in range(m * s):
                ub_rows.append(ub_row)
                ub_cols.append(base + idx)
                ub_data.append(float(cp[idx]))
            ub_rows.append(ub_row)
            ub_cols.append(t_off + k)
            ub_data.append(-1.0)
            epi_rows[(k, b)] = ub_row
            ub_row += 1
            # row marginals
            for i in range(m):
                for jj in range(s):
                    eq_rows.append(eq_row)
                    eq_cols.append(base + i * s + jj)
                    eq_data.append(1.0)
                beq.append(float(f.weights[i]))
                eq_row += 1
            # column links to w
            for jj in range(s):
                for i in range(m):
                    eq_rows.append(eq_row)
                    eq_cols.append(base + i * s + jj)
                    eq_data.append(1.0)
                eq_rows.append(eq_row)
                eq_cols.append(w_off[b] + jj)
                eq_data.append(-1.0)
                beq.append(0.0)
                eq_row += 1

    A_ub = coo_matrix((ub_data, (ub_rows, ub_cols)), shape=(ub_row, n_var))
    A_eq = coo_matrix((eq_data, (eq_rows, eq_cols)), shape=(eq_row, n_var))
    res = linprog(
        cvec, A_ub=A_ub, b_ub=np.zeros(ub_row), A_eq=A_eq, b_eq=np.array(beq), method="highs"
    )
    if res.status != 0:
        raise LPInfeasible(f"minimax LP failed with status {res.status}")
    multipliers = -res.ineqlin.marginals  # >= 0 for a minimization
    zeta = np.zeros((K, len(base_ids)))
    for k in range(K):
        for i, b in enumerate(base_ids):
            rho = max(float(multipliers[epi_rows[(k, b)]]), 0.0)
            zeta[k, i] = rho / (float(problem.lambdas[k]) * float(problem.sigma[i]))
        row = np.maximum(zeta[k], ZETA_FLOOR)
        zeta[k] = row / _zeta_norm(row, problem.sigma, 1.0)
    return zeta


def extract_certificate(problem: BarycenterProblem, result: BarycenterResult) -> DualCertificate:
    """Build a feasible certificate at a solved problem.

    zeta: all ones when q = p (where that choice attains the supremum);
    Hoelder-aligned powers of the fiber distance profile for p < q < inf;
    epigraph multipliers for q = inf.  xi: per fiber, the aligned optimal
    potentials of the zeta-weighted joint transportation LP; the first K-1 are
    tightened by a double transform, the K-th rebuilt to make the weighted sum
    vanish identically, and all are re-centered to vanish at the fiber's first
    support point (which changes no value).
    """
    if result is None or getattr(result, "minimizer", None) is None:
        raise NotSolved("certificate extraction needs a solved result")
    if problem.kappa != problem.config.p:
        raise ValueError("certificates exist for the kappa = p objective")
    p, q = problem.config.p, problem.config.q
    if math.isinf(q):
        zeta = _zeta_minimax(problem)
    else:
        zeta = _zeta_finite_q(problem, result.minimizer)

    K = problem.K
    xi: list[dict[str, np.ndarray]] = [dict() for _ in range(K)]
    for i, b in enumerate(problem.base_ids):
        cost = cost_at(problem.costs, b)
        support = problem.support[b]
        tau = problem.lambdas * zeta[:, i]
        _, _, _, betas = fiber_barycenter_lp(
            [mk.fiber(b) for mk in problem.inputs], cost, tau, p, support
        )
        tightened = []
        for k in range(K - 1):
            lam = float(problem.lambdas[k])
            hat = -betas[k] / zeta[k, i]
            inner = c_transform(hat, lam, p, cost, domain=support)
            tightened.append(c_transform(inner, lam, p, cost)[support])
        last = np.zeros(support.size)
        for k in range(K - 1):
            last -= zeta[k, i] * tightened[k]
        tightened.append(last / zeta[K - 1, i])
        for k in range(K):
            xi[k][b] = tightened[k] - tightened[k][0]
    return DualCertificate(base_ids=problem.base_ids, zeta=zeta, xi=tuple(xi))


def duality_gap(
    problem: BarycenterProblem,
    result: BarycenterResult,
    cert: DualCertificate,
    tol: float | None = None,
) -> GapReport:
    """Primal objective at the result versus the certificate's dual value.

    An invalid certificate yields dual = -inf and certified = False.  The
    default tolerance is 1e-7 * (1 + primal) for the exact LP regime q = p and
    1e-3 * (1 + primal) otherwise.
    """
    primal = objective(problem, result.minimizer)
    if tol is None:
        rel = 1e-7 if problem.config.q == problem.config.p else 1e-3
        tol = rel * (1.0 + abs(primal))
    report = validate_certificate(cert, problem)
    if not report.ok:
        return GapReport(primal=primal, dual=-math.inf, gap=math.inf, certified=False, tol=tol)
    dual = eval_dual(cert, problem)
    gap = primal - dual
    return GapReport(primal=primal, dual=dual, gap=gap, certified=bool(gap <= tol), tol=tol)
