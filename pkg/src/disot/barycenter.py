"""Barycenters on fixed candidate supports: joint LP and projected subgradient.

With objective exponent kappa equal to p the problem is convex in the target
fiber weights.  For q = p it decouples across fibers into joint transportation
LPs solved exactly.  For p < q it is solved by projected subgradient descent
on the fiber weight simplices, certified through dual certificates from the
duality module.  Other kappa values are supported through plain objective
evaluation and candidate search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .errors import (
    BaseMismatch,
    EmptySupport,
    LPInfeasible,
    SupportViolation,
)
from .measures import DiscreteMeasure, FiberedMeasure, GroundCost
from .metric import CostTable, DisintConfig, cost_at, lq_norm, scrmk
from .ot import transport
from .parallel import fiber_map

LAMBDA_TOL = 1e-12

# fibers within this of the max count as active for the q = inf subdifferential
ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class BarycenterProblem:
    """K >= 2 input measures, simplex weights, exponents, and candidate supports.

    ``support`` maps each base point to the candidate point ids the barycenter
    may charge; it defaults to every point of that fiber's cost matrix.
    """

    inputs: tuple[FiberedMeasure, ...]
    lambdas: np.ndarray
    config: DisintConfig
    costs: Mapping[str, GroundCost]
    support: Mapping[str, np.ndarray]
    kappa: float

    def __post_init__(self):
        if len(self.inputs) < 2:
            raise ValueError("a barycenter problem needs at least two inputs")
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.size != len(self.inputs):
            raise ValueError("one lambda per input required")
        if lam.min() <= 0.0:
            raise ValueError("lambdas must be strictly positive")
        if abs(math.fsum(lam) - 1.0) > LAMBDA_TOL:
            raise ValueError("lambdas must sum to 1")
        object.__setattr__(self, "lambdas", lam)
        base = self.inputs[0]
        for other in self.inputs[1:]:
            if not base.same_base(other):
                raise BaseMismatch("inputs must share base points and base weights")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        sup = {}
        for b in base.base_ids:
            ids = np.asarray(self.support[b], dtype=np.int64)
            if ids.size == 0:
                raise EmptySupport(f"no candidate support at base point {b!r}")
            n = cost_at(self.costs, b).n
            if ids.min() < 0 or ids.max() >= n:
                raise SupportViolation(f"support ids out of range at {b!r}")
            sup[b] = np.unique(ids)
        object.__setattr__(self, "support", sup)

    @property
    def K(self) -> int:
        return len(self.inputs)

    @property
    def base_ids(self) -> tuple[str, ...]:
        return self.inputs[0].base_ids

    @property
    def sigma(self) -> np.ndarray:
        return self.inputs[0].sigma


def make_problem(
    inputs: Sequence[FiberedMeasure],
    lambdas: Sequence[float],
    config: DisintConfig,
    costs: CostTable,
    support: Mapping[str, Sequence[int]] | None = None,
    kappa: float | None = None,
) -> BarycenterProblem:
    base = inputs[0]
    cost_map = {b: cost_at(costs, b) for b in base.base_ids}
    if support is None:
        support = {b: np.arange(cost_map[b].n) for b in base.base_ids}
    return BarycenterProblem(
        inputs=tuple(inputs),
        lambdas=np.asarray(lambdas, dtype=np.float64),
        config=config,
        costs=cost_map,
        support={b: np.asarray(s, dtype=np.int64) for b, s in support.items()},
        kappa=config.p if kappa is None else float(kappa),
    )


_ONE_POINT_BASE = "base"


def classical_problem(
    mus: Sequence[DiscreteMeasure],
    cost: GroundCost,
    lambdas: Sequence[float],
    p: float,
    support: Sequence[int] | None = None,
    kappa: float | None = None,
    q: float | None = None,
) -> BarycenterProblem:
    """Wrap plain discrete measures as a one-point-base fibered problem."""
    fibered = [
        FiberedMeasure([_ONE_POINT_BASE], [1.0], {_ONE_POINT_BASE: mu}) for mu in mus
    ]
    cfg = DisintConfig(p, p if q is None else q)
    sup = None if support is None else {_ONE_POINT_BASE: np.asarray(support, dtype=np.int64)}
    return make_problem(fibered, lambdas, cfg, cost, sup, kappa)


@dataclass(frozen=True)
class BarycenterResult:
    minimizer: FiberedMeasure
    value: float
    per_k_distances: np.ndarray
    solver_log: dict
    certified: bool = True
    gap: float | None = None
    dual_bound: float | None = None


def _candidate_in_support(problem: BarycenterProblem, candidate: FiberedMeasure):
    if not problem.inputs[0].same_base(candidate):
        raise BaseMismatch("candidate does not share the problem's base weights")
    for b in candidate.base_ids:
        extra = np.setdiff1d(candidate.fiber(b).point_ids, problem.support[b])
        if extra.size:
            raise SupportViolation(
                f"candidate charges points {extra.tolist()} outside the support at {b!r}"
            )


def objective(problem: BarycenterProblem, candidate: FiberedMeasure) -> float:
    """Weighted sum of kappa-th powers of distances from the inputs to candidate."""
    _candidate_in_support(problem, candidate)
    dists = [scrmk(mk, candidate, problem.config, problem.costs) for mk in problem.inputs]
    return math.fsum(lam * d**problem.kappa for lam, d in zip(problem.lambdas, dists))


def candidate_search(
    problem: BarycenterProblem, candidates: Sequence[FiberedMeasure]
) -> BarycenterResult:
    """Exhaustive minimum of the objective over an explicit candidate list.

    This is the supported route for kappa != p, where the LP structure is
    unavailable.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    values = [objective(problem, c) for c in candidates]
    best = int(np.argmin(values))
    winner = candidates[best]
    dists = np.array([scrmk(mk, winner, problem.config, problem.costs) for mk in problem.inputs])
    return BarycenterResult(
        minimizer=winner,
        value=values[best],
        per_k_distances=dists,
        solver_log={"method": "candidate_search", "values": values},
    )


def fiber_barycenter_lp(
    fibers: Sequence[DiscreteMeasure],
    cost: GroundCost,
    tau: np.ndarray,
    p: float,
    support: np.ndarray,
):
    """Joint transportation LP for one fiber.

    Variables are one coupling per input plus shared target weights w on the
    support; couplings are constrained to have their row marginals equal to
    the inputs and all column marginals equal to w.

    Returns (value, w, alphas, betas) with exact LP duals: alpha_k on the k-th
    input's support, beta_k on the candidate support, satisfying
    alpha_k(i) + beta_k(s) <= tau_k * d(i, s)**p and sum_k beta_k >= 0.
    """
    K = len(fibers)
    s = support.size
    sizes = [len(f) for f in fibers]
    n_gamma = sum(m * s for m in sizes)
    n_var = n_gamma + s

    rows, cols, data = [], [], []
    cvec = np.zeros(n_var)
    offset = 0
    row_off = 0
    row_blocks = []
    col_blocks = []
    # row marginal blocks
    for k, f in enumerate(fibers):
        m = sizes[k]
        sub = cost.submatrix(f.point_ids, support)
        cp = sub if p == 1.0 else sub**p
        cvec[offset : offset + m * s] = tau[k] * cp.ravel()
        for i in range(m):
            for jj in range(s):
                rows.append(row_off + i)
                cols.append(offset + i * s + jj)
                data.append(1.0)
        row_blocks.append((row_off, m))
        row_off += m
        offset += m * s
    # column link blocks: sum_i gamma_k[i, s] - w_s = 0
    offset = 0
    for k, f in enumerate(fibers):
        m = sizes[k]
        for jj in range(s):
            for i in range(m):
                rows.append(row_off + jj)
                cols.append(offset + i * s + jj)
                data.append(1.0)
            rows.append(row_off + jj)
            cols.append(n_gamma + jj)
            data.append(-1.0)
        col_blocks.append((row_off, s))
        row_off += s
        offset += m * s
    beq = np.zeros(row_off)
    for k, f in enumerate(fibers):
        r0, m = row_blocks[k]
        beq[r0 : r0 + m] = f.weights
    A = coo_matrix((data, (rows, cols)), shape=(row_off, n_var))
    res = linprog(cvec, A_eq=A, b_eq=beq, method="highs")
    if res.status != 0:
        raise LPInfeasible(f"barycenter LP failed with status {res.status}")
    w = np.maximum(res.x[n_gamma:], 0.0)
    duals = res.eqlin.marginals
    alphas = [duals[r0 : r0 + m] for r0, m in row_blocks]
    betas = [duals[r0 : r0 + sz] for r0, sz in col_blocks]
    value = math.fsum((cvec[:n_gamma] * res.x[:n_gamma]).tolist())
    return value, w, alphas, betas


def _measure_on_support(support: np.ndarray, w: np.ndarray) -> DiscreteMeasure:
    keep = w > 0.0
    return DiscreteMeasure(support[keep], w[keep])


def _assemble(problem: BarycenterProblem, weights: Mapping[str, np.ndarray]) -> FiberedMeasure:
    fibers = {
        b: _measure_on_support(problem.support[b], weights[b]) for b in problem.base_ids
    }
    return FiberedMeasure(problem.base_ids, problem.sigma, fibers)


def classical_barycenter(problem: BarycenterProblem) -> BarycenterResult:
    """Global barycenter over measures on the support, by one joint LP.

    Requires a one-point base and kappa = p; the optimum is exact.
    """
    if len(problem.base_ids) != 1:
        raise BaseMismatch("classical barycenter expects a one-point base")
    return _lp_barycenter(problem)


def _lp_barycenter(problem: BarycenterProblem) -> BarycenterResult:
    if problem.kappa != problem.config.p:
        raise ValueError("the LP route requires kappa = p")
    p = problem.config.p

    def solve_one(b: str):
        return fiber_barycenter_lp(
            [mk.fiber(b) for mk in problem.inputs],
            cost_at(problem.costs, b),
            problem.lambdas,
            p,
            problem.support[b],
        )

    solved = fiber_map(solve_one, list(problem.base_ids))
    weights = {b: sol[1] for b, sol in zip(problem.base_ids, solved)}
    minimizer = _assemble(problem, weights)
    fiber_values = [sol[0] for sol in solved]
    value = math.fsum(s * v for s, v in zip(problem.sigma, fiber_values))
    dists = np.array(
        [scrmk(mk, minimizer, problem.config, problem.costs) for mk in problem.inputs]
    )
    log = {
        "method": "joint_lp",
        "fiber_values": dict(zip(problem.base_ids, fiber_values)),
    }
    return BarycenterResult(
        minimizer=minimizer,
        value=value,
        per_k_distances=dists,
        solver_log=log,
        certified=True,
        gap=0.0,
        dual_bound=value,
    )


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorting algorithm)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    idx = np.nonzero(u + (1.0 - css) / ks > 0.0)[0]
    k = int(idx[-1]) + 1
    tau = (1.0 - css[k - 1]) / k
    return np.maximum(v + tau, 0.0)


def disint_barycenter(
    problem: BarycenterProblem,
    start: Mapping[str, np.ndarray] | None = None,
    max_iter: int = 10_000,
    tol: float = 1e-3,
    cert_every: int = 25,
) -> BarycenterResult:
    """Barycenter in the disintegrated metric at kappa = p.

    q = p decouples across fibers and is solved exactly by per-fiber LPs.
    For p < q the objective is convex in the fiber weights and is minimized by
    projected subgradient descent with steps c/sqrt(iter); iteration stops once
    a dual certificate bounds the gap by tol * (1 + value).  Hitting the
    iteration cap returns the best iterate flagged as non-certified.
    """
    if problem.kappa != problem.config.p:
        raise ValueError("disint_barycenter requires kappa = p")
    if problem.config.q == problem.config.p:
        return _lp_barycenter(problem)
    return _subgradient_barycenter(problem, start, max_iter, tol, cert_every)


def _subgradient_barycenter(problem, start, max_iter, tol, cert_every):
    from . import duality  # deferred: duality builds on this module's LP helper

    p, q = problem.config.p, problem.config.q
    base_ids = list(problem.base_ids)
    sigma = problem.sigma
    K = problem.K
    lambdas = problem.lambdas
    supports = {b: problem.support[b] for b in base_ids}

    # cost blocks per (k, fiber): input support x candidate support, p-th power
    cp = {}
    for k, mk in enumerate(problem.inputs):
        for b in base_ids:
            f = mk.fiber(b)
            sub = cost_at(problem.costs, b).submatrix(f.point_ids, supports[b])
            cp[(k, b)] = sub if p == 1.0 else sub**p

    if start is None:
        w = {b: np.full(supports[b].size, 1.0 / supports[b].size) for b in base_ids}
    else:
        w = {b: project_simplex(np.asarray(start[b], dtype=np.float64)) for b in base_ids}

    r = q / p if not math.isinf(q) else math.inf

    def evaluate(wts):
        """Per-(k, fiber) p-th power costs and column duals at fixed weights."""

        def one(b):
            vals = np.empty(K)
            grads = []
            for k, mk in enumerate(problem.inputs):
                f = mk.fiber(b)
                value, _, _, v, _ = transport(cp[(k, b)], f.weights, wts[b])
                vals[k] = value
                grads.append(v)
            return vals, grads

        out = fiber_map(one, base_ids)
        fmat = np.stack([vals for vals, _ in out], axis=1)  # K x fibers
        duals = {b: out[i][1] for i, b in enumerate(base_ids)}
        return fmat, duals

    def norms_and_objective(fmat):
        per_k = np.array([lq_norm(fmat[k], sigma, r) for k in range(K)])
        return per_k, math.fsum(lambdas * per_k)

    best_val = math.inf
    best_w = None
    dual_bound = -math.inf
    step_scale = None
    certified = False
    gap = math.inf
    trace = []
    cached_cert = None  # for q = inf the certificate does not depend on the iterate

    it = 0
    for it in range(1, max_iter + 1):
        fmat, duals = evaluate(w)
        per_k_norm, obj = norms_and_objective(fmat)
        if obj < best_val:
            best_val = obj
            best_w = {b: w[b].copy() for b in base_ids}

        grad = {b: np.zeros(supports[b].size) for b in base_ids}
        for k in range(K):
            if math.isinf(r):
                nk = per_k_norm[k]
                active = np.nonzero(fmat[k] >= nk - ACTIVE_TOL)[0]
                coeff = np.zeros(len(base_ids))
                coeff[active] = 1.0 / active.size
            else:
                nk = per_k_norm[k]
                if nk <= 0.0:
                    continue
                coeff = sigma * fmat[k] ** (r - 1.0) * nk ** (1.0 - r)
            for i, b in enumerate(base_ids):
                if coeff[i] != 0.0:
                    grad[b] += lambdas[k] * coeff[i] * duals[b][k]

        gnorm = math.sqrt(math.fsum(float(g @ g) for g in grad.values()))
        if gnorm == 0.0:
            # zero subgradient of a convex objective: the iterate is optimal
            best_val, best_w = obj, {b: w[b].copy() for b in base_ids}
            certified = True
            gap = 0.0
            dual_bound = max(dual_bound, obj)
            break
        if step_scale is None:
            step_scale = obj / gnorm

        if it == 1 or it % cert_every == 0:
            interim = BarycenterResult(
                minimizer=_assemble(problem, best_w),
                value=best_val,
                per_k_distances=np.array([]),
                solver_log={},
            )
            if math.isinf(r) and cached_cert is not None:
                cert = cached_cert
            else:
                cert = duality.extract_certificate(problem, interim)
                if math.isinf(r):
                    cached_cert = cert
            dual_bound = max(dual_bound, duality.eval_dual(cert, problem))
            gap = best_val - dual_bound
            trace.append((it, best_val, dual_bound))
            if gap <= tol * (1.0 + abs(best_val)):
                certified = True
                break

        step = step_scale / math.sqrt(it)
        if dual_bound > -math.inf and obj > dual_bound:
            # Polyak step toward the certified lower bound; the bound only
            # underestimates the optimum, so this remains convergent and is
            # much faster than the plain c/sqrt(iter) tail
            step = (obj - dual_bound) / (gnorm * gnorm)
        for b in base_ids:
            w[b] = project_simplex(w[b] - step * grad[b])

    minimizer = _assemble(problem, best_w)
    dists = np.array(
        [scrmk(mk, minimizer, problem.config, problem.costs) for mk in problem.inputs]
    )
    log = {
        "method": "projected_subgradient",
        "iterations": it,
        "trace": trace[-20:],
        "max_iter_exceeded": not certified,
    }
    return BarycenterResult(
        minimizer=minimizer,
        value=best_val,
        per_k_distances=dists,
        solver_log=log,
        certified=certified,
        gap=gap,
        dual_bound=dual_bound if dual_bound > -math.inf else None,
    )


@dataclass(frozen=True)
class ProbeReport:
    """Collection of equal-value minimizers found by randomized re-solving."""

    values: tuple[float, ...]
    max_pairwise_distance: float
    witness: bool
    n_candidates: int
    candidates: tuple[FiberedMeasure, ...] = field(repr=False, default=())


def _resolve(problem: BarycenterProblem, rng, radius: float, mode: str):
    """One randomized re-solve: objective tilt, random start, or support subset."""
    if mode == "tilt" and problem.config.q == problem.config.p:
        p = problem.config.p
        weights = {}
        for b in problem.base_ids:
            fibers = [mk.fiber(b) for mk in problem.inputs]
            cost = cost_at(problem.costs, b)
            sup = problem.support[b]
            # tilt the LP objective multiplicatively; minimizers of the tilted
            # LP that keep the original objective value witness the optimal face
            tilt = 1.0 + radius * rng.random(cost.d.shape)
            tilt = (tilt + tilt.T) / 2.0
            np.fill_diagonal(tilt, 1.0)
            tilted_cost = GroundCost(cost.d * tilt)
            _, wb, _, _ = fiber_barycenter_lp(fibers, tilted_cost, problem.lambdas, p, sup)
            weights[b] = wb
        return _assemble(problem, weights)
    if mode == "support":
        sub_support = {}
        for b in problem.base_ids:
            keep = rng.random(problem.support[b].size) < 0.5
            sub_support[b] = problem.support[b][keep]
            if sub_support[b].size == 0:
                sub_support[b] = problem.support[b]
        sub = BarycenterProblem(
            inputs=problem.inputs,
            lambdas=problem.lambdas,
            config=problem.config,
            costs=problem.costs,
            support=sub_support,
            kappa=problem.kappa,
        )
        return disint_barycenter(sub).minimizer
    # random feasible start for the subgradient path
    start = {
        b: rng.dirichlet(np.ones(problem.support[b].size)) for b in problem.base_ids
    }
    return disint_barycenter(problem, start=start).minimizer


def uniqueness_probe(
    problem: BarycenterProblem,
    result: BarycenterResult,
    trials: int,
    radius: float,
    seed: int = 0,
    value_tol: float | None = None,
    dist_tol: float = 1e-4,
) -> ProbeReport:
    """Empirical probe for minimizer uniqueness.

    Re-solves from randomized starts (subgradient path randomization for
    p < q, objective tilts of size ``radius`` for the LP route) and from
    random support subsets, and also tries each input measure as a candidate.
    Minimizers matching the best value within ``value_tol`` are collected and
    their maximum pairwise distance reported; a distance above ``dist_tol`` at
    equal value is a nonuniqueness witness.
    """
    rng = np.random.default_rng(seed)
    exact = problem.config.q == problem.config.p
    if value_tol is None:
        value_tol = (1e-9 if exact else 2e-3) * (1.0 + abs(result.value))

    candidates: list[FiberedMeasure] = [result.minimizer]
    for mk in problem.inputs:
        try:
            _candidate_in_support(problem, mk)
        except SupportViolation:
            continue
        candidates.append(mk)
    for t in range(trials):
        if exact:
            mode = "tilt" if t % 2 == 0 else "support"
        else:
            mode = "start" if t % 2 == 0 else "support"
        candidates.append(_resolve(problem, rng, radius, mode))

    values = np.array([objective(problem, c) for c in candidates])
    best = float(values.min())
    keep = [c for c, v in zip(candidates, values) if v <= best + value_tol]
    kept_values = tuple(float(v) for v in values if v <= best + value_tol)

    max_dist = 0.0
    for i in range(len(keep)):
        for j in range(i + 1, len(keep)):
            d = scrmk(keep[i], keep[j], problem.config, problem.costs)
            max_dist = max(max_dist, d)
    return ProbeReport(
        values=kept_values,
        max_pairwise_distance=max_dist,
        witness=max_dist > dist_tol,
        n_candidates=len(keep),
        candidates=tuple(keep),
    )
