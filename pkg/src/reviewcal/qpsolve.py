"""Convex QP solver with KKT certification.

Solves::

    minimize    1/2 z'Pz + q'z
    subject to  A z  = b
                G z <= h

with a primal-dual interior point method (Mehrotra predictor-corrector).
Each iteration eliminates the slacks and factors the regularised reduced
system ``[[P + G'WG + dI, A'], [A, -dI]]`` with SuperLU, followed by a few
steps of iterative refinement against the unregularised matrix.

When the interior point iteration does not converge, an L1 phase-one
problem measures the minimal constraint violation; a violation above
``sqrt(tol)`` (relative) certifies infeasibility.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import DimensionMismatch, NumericalBreakdown

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200_000
IPM_ITER_CAP = 150
FEASIBILITY_REG = 1e-12
_KKT_REG = 1e-10
_REFINE_STEPS = 3


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"


def _as_sparse(M, shape):
    if M is None:
        return sp.csc_matrix(shape)
    if sp.issparse(M):
        M = M.tocsc().astype(float)
    else:
        M = sp.csc_matrix(np.atleast_2d(np.asarray(M, dtype=float)))
        if M.shape == (1, 0):
            M = sp.csc_matrix(shape)
    if M.shape != shape:
        raise DimensionMismatch(f"matrix has shape {M.shape}, expected {shape}")
    return M


def _vec(v, n, name):
    if v is None:
        return np.zeros(n)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {n}")
    return v


@dataclass
class QPProblem:
    """``min 1/2 z'Pz + q'z  s.t.  Az = b, Gz <= h``.

    ``P`` may be given as a dense or sparse matrix, or as a 1-D array holding
    its diagonal.  Missing blocks default to empty.
    """

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray

    @classmethod
    def build(cls, n=None, P=None, q=None, A=None, b=None, G=None, h=None) -> "QPProblem":
        if n is None:
            for cand in (q, P):
                if cand is not None:
                    n = np.shape(cand)[0]
                    break
            else:
                for M in (A, G):
                    if M is not None:
                        n = M.shape[1]
                        break
        if n is None:
            raise DimensionMismatch("cannot infer the number of variables")
        if P is not None and not sp.issparse(P) and np.ndim(P) == 1:
            P = sp.diags(np.asarray(P, dtype=float), format="csc")
        me = 0 if b is None else np.shape(b)[0]
        mi = 0 if h is None else np.shape(h)[0]
        if (A is None) != (b is None):
            raise DimensionMismatch("A and b must be given together")
        if (G is None) != (h is None):
            raise DimensionMismatch("G and h must be given together")
        return cls(
            P=_as_sparse(P, (n, n)),
            q=_vec(q, n, "q"),
            A=_as_sparse(A, (me, n)),
            b=_vec(b, me, "b"),
            G=_as_sparse(G, (mi, n)),
            h=_vec(h, mi, "h"),
        )

    @property
    def n_vars(self) -> int:
        return self.P.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    def validate(self):
        n = self.n_vars
        if self.P.shape != (n, n) or self.q.shape != (n,):
            raise DimensionMismatch("P must be n x n and q of length n")
        if self.A.shape != (self.b.shape[0], n):
            raise DimensionMismatch(f"A is {self.A.shape}, b has {self.b.shape[0]} rows")
        if self.G.shape != (self.h.shape[0], n):
            raise DimensionMismatch(f"G is {self.G.shape}, h has {self.h.shape[0]} rows")
        for name, v in (("q", self.q), ("b", self.b), ("h", self.h)):
            if not np.all(np.isfinite(v)):
                raise DimensionMismatch(f"{name} contains non-finite entries")
        asym = abs(self.P - self.P.T)
        if asym.nnz and asym.max() > 1e-12 * (1 + abs(self.P).max()):
            raise NumericalBreakdown("P is not symmetric")
        offdiag = self.P - sp.diags(self.P.diagonal())
        if offdiag.count_nonzero() == 0:
            if np.any(self.P.diagonal() < 0):
                raise NumericalBreakdown("P has a negative diagonal entry")
        elif n <= 3000:
            lam = np.linalg.eigvalsh(self.P.toarray()).min()
            if lam < -1e-10 * (1 + abs(self.P).max()):
                raise NumericalBreakdown(f"P is not positive semidefinite (min eigenvalue {lam:.3g})")
        return self

    def objective(self, z) -> float:
        return float(0.5 * z @ (self.P @ z) + self.q @ z)

    def dump(self) -> str:
        """Plain-text listing for debugging."""
        lines = [f"QP n={self.n_vars} eq={self.n_eq} ineq={self.n_ineq}"]

        def block(name, M):
            C = M.tocoo()
            for r, c, v in sorted(zip(C.row, C.col, C.data)):
                lines.append(f"{name} {r} {c} {v!r}")

        block("P", self.P)
        lines += [f"q {i} {v!r}" for i, v in enumerate(self.q) if v]
        block("A", self.A)
        lines += [f"b {i} {v!r}" for i, v in enumerate(self.b)]
        block("G", self.G)
        lines += [f"h {i} {v!r}" for i, v in enumerate(self.h)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.dual, self.complementarity)


def _inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def kkt_residuals(problem: QPProblem, z, y=None, mu=None, relative: bool = False) -> KKTResiduals:
    """KKT residuals of ``(z, y, mu)`` in the infinity norm.

    ``y`` are equality multipliers and ``mu >= 0`` inequality multipliers.
    With ``relative=True`` each residual is divided by one plus the magnitude
    of the terms it is built from.
    """
    z = _vec(z, problem.n_vars, "z")
    y = _vec(y, problem.n_eq, "y")
    mu = _vec(mu, problem.n_ineq, "mu")
    Pz = problem.P @ z
    Aty = problem.A.T @ y
    Gtm = problem.G.T @ mu
    Az = problem.A @ z
    Gz = problem.G @ z
    slack = Gz - problem.h
    stat = _inf(Pz + problem.q + Aty + Gtm)
    peq = _inf(Az - problem.b)
    pin = max(0.0, float(slack.max())) if slack.size else 0.0
    dual = max(0.0, float(-mu.min())) if mu.size else 0.0
    comp = _inf(mu * slack)
    if relative:
        obj = abs(0.5 * z @ Pz) + abs(problem.q @ z)
        stat /= 1 + max(_inf(Pz), _inf(problem.q), _inf(Aty), _inf(Gtm))
        peq /= 1 + max(_inf(Az), _inf(problem.b))
        pin /= 1 + max(_inf(Gz), _inf(problem.h))
        dual /= 1 + _inf(mu)
        comp /= 1 + obj
    return KKTResiduals(stat, peq, pin, dual, comp)


@dataclass
class QPSolution:
    """Solver output.  Residuals are relative (see :func:`kkt_residuals`)."""

    z: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    objective: float
    status: Status
    iterations: int
    eq_residual: float
    ineq_violation: float
    stationarity_residual: float
    complementarity_residual: float
    infeasibility: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _step_to_boundary(v, dv) -> float:
    neg = dv < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-v[neg] / dv[neg]))


def _kkt_solver(K, K0):
    """Solve with the regularised matrix ``K``, refining against the exact ``K0``.

    The regularised KKT matrix is quasi-definite, so a symmetric ordering with
    weak pivoting is usually stable and keeps fill low.  If refinement cannot
    recover an accurate solution the matrix is refactored with partial
    pivoting.  Raises ``RuntimeError`` when no factorisation succeeds.
    """
    state = {"lu": None, "pivoting": False}
    try:
        state["lu"] = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=1e-3,
                                options=dict(SymmetricMode=True))
    except RuntimeError:
        state["lu"] = spla.splu(K)
        state["pivoting"] = True

    def refined(rhs):
        lu = state["lu"]
        x = lu.solve(rhs)
        best = np.linalg.norm(rhs - K0 @ x)
        for _ in range(_REFINE_STEPS):
            r = rhs - K0 @ x
            cand = x + lu.solve(r)
            res = np.linalg.norm(rhs - K0 @ cand)
            if not res < best:
                break
            x, best = cand, res
        return x, best

    def solve(rhs):
        x, res = refined(rhs)
        if state["pivoting"] or (np.isfinite(res) and res <= 1e-9 * (1.0 + np.linalg.norm(rhs))):
            return x
        try:
            state["lu"] = spla.splu(K)
        except RuntimeError as exc:
            raise NumericalBreakdown(f"KKT factorisation failed: {exc}") from None
        state["pivoting"] = True
        return refined(rhs)[0]

    return solve


def _interior_point(prob: QPProblem, tol: float, max_iter: int):
    """Core IPM.  Returns ``(z, y, mu, converged, iterations)``."""
    n, me, mi = prob.n_vars, prob.n_eq, prob.n_ineq
    P, q, A, b, G, h = prob.P, prob.q, prob.A, prob.b, prob.G, prob.h
    At, Gt = A.T.tocsc(), G.T.tocsc()
    Ip = sp.identity(n, format="csc")
    Id = sp.identity(me, format="csc")

    def factor(W):
        H = (P + Gt @ sp.diags(W) @ G).tocsc()
        K0 = sp.bmat([[H, At], [A, None]], format="csc") if me else H
        scale = max(1.0, float(np.max(np.abs(H.diagonal()))) if n else 1.0)
        # escalate the regularisation only if the matrix is numerically singular
        for reg in (_KKT_REG, _KKT_REG * scale, 1e-7 * scale):
            K = (sp.bmat([[H + reg * Ip, At], [A, -reg * Id]], format="csc") if me
                 else (H + reg * Ip).tocsc())
            try:
                return _kkt_solver(K, K0)
            except RuntimeError:
                continue
        raise NumericalBreakdown("KKT factorisation failed: matrix is singular")


    # starting point: regularised least-squares fit of the constraints
    solve0 = factor(np.ones(mi))
    rhs0 = np.concatenate([-q + Gt @ h, b]) if me else -q + Gt @ h
    z = solve0(rhs0)[:n]
    y = np.zeros(me)
    r0 = h - G @ z
    s = np.maximum(r0, 1.0) if mi else np.zeros(0)
    mu = np.ones(mi)

    for it in range(1, max_iter + 1):
        Pz = P @ z
        rd = Pz + q + At @ y + Gt @ mu
        rp = A @ z - b
        Gz = G @ z
        ri = Gz + s - h
        gap = float(s @ mu) / mi if mi else 0.0

        # convergence is judged on the true KKT residuals (Gz - h, not s)
        res = kkt_residuals(prob, z, y, mu, relative=True)
        comp_ok = (res.complementarity <= tol and gap <= tol * (1 + abs(prob.objective(z))))
        if res.stationarity <= tol and res.primal_eq <= tol and res.primal_ineq <= tol and comp_ok:
            return z, y, mu, True, it - 1

        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(mu))):
            break
        if _inf(z) > 1e14 or (mi and _inf(mu) > 1e14) or (me and _inf(y) > 1e14):
            break

        W = mu / s if mi else np.zeros(0)
        try:
            solve = factor(W)
        except NumericalBreakdown:
            break

        def direction(rc):
            corr = (-rc + mu * ri) / s if mi else np.zeros(0)
            r1 = -rd - Gt @ corr
            sol = solve(np.concatenate([r1, -rp]) if me else r1)
            dz, dy = sol[:n], sol[n:]
            ds = -ri - G @ dz
            dmu = (-rc - mu * ds) / s if mi else np.zeros(0)
            return dz, dy, ds, dmu

        try:
            if not mi:
                dz, dy, _, _ = direction(np.zeros(0))
                z, y = z + dz, y + dy
                continue
            # Mehrotra predictor, then the centred corrector
            dz, dy, ds, dmu = direction(s * mu)
            a_aff = min(1.0, _step_to_boundary(s, ds), _step_to_boundary(mu, dmu))
            gap_aff = float((s + a_aff * ds) @ (mu + a_aff * dmu)) / mi
            sigma = (gap_aff / gap) ** 3 if gap > 0 else 0.0
            dz, dy, ds, dmu = direction(s * mu + ds * dmu - sigma * gap)
        except NumericalBreakdown:
            # factorisation collapsed (typically diverging on an infeasible
            # problem); report non-convergence and let the caller decide
            break
        alpha = min(1.0, 0.99 * min(_step_to_boundary(s, ds), _step_to_boundary(mu, dmu)))
        z = z + alpha * dz
        y = y + alpha * dy
        s = s + alpha * ds
        mu = mu + alpha * dmu
        if alpha < 1e-12:
            break

    return z, y, mu, False, it


def _phase_one(prob: QPProblem, tol: float, max_iter: int):
    """Minimal L1 violation ``min 1'(u+v+w)`` over relaxed constraints."""
    n, me, mi = prob.n_vars, prob.n_eq, prob.n_ineq
    nv = n + 2 * me + mi
    Iu = sp.identity(me, format="csc")
    Iw = sp.identity(mi, format="csc")
    blocks_A = [[prob.A, Iu, -Iu, sp.csc_matrix((me, mi))]]
    A1 = sp.bmat(blocks_A, format="csc") if me else sp.csc_matrix((0, nv))
    G_top = sp.bmat([[prob.G, sp.csc_matrix((mi, 2 * me)), -Iw]], format="csc") if mi else sp.csc_matrix((0, nv))
    G_pos = sp.bmat([[sp.csc_matrix((2 * me + mi, n)), -sp.identity(2 * me + mi)]], format="csc")
    G1 = sp.vstack([G_top, G_pos]).tocsc()
    h1 = np.concatenate([prob.h, np.zeros(2 * me + mi)])
    q1 = np.concatenate([np.zeros(n), np.ones(2 * me + mi)])
    P1 = sp.diags(np.full(nv, FEASIBILITY_REG * 100), format="csc")
    p1 = QPProblem(P1, q1, A1, prob.b.copy(), G1, h1)
    z1, _, _, ok, it = _interior_point(p1, tol, max_iter)
    violation = float(np.sum(np.abs(z1[n:]))) if ok else math.inf
    return ok, violation, z1[:n], it


def solve_qp(problem: QPProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QPSolution:
    """Solve a convex QP; ``Optimal`` guarantees relative KKT residuals <= tol.

    Raises ``DimensionMismatch`` for inconsistent data and
    ``NumericalBreakdown`` when ``P`` is not PSD or factorisation fails.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    problem.validate()
    cap = max(1, min(int(max_iter), IPM_ITER_CAP))

    # With q = 0 the optimum is positively homogeneous in (b, h); lift tiny
    # right-hand sides to unit scale so absolute tolerances stay meaningful.
    scale = 1.0
    rhs_mag = max(_inf(problem.b), _inf(problem.h))
    if not problem.q.any() and 0 < rhs_mag < 1:
        scale = 1.0 / rhs_mag
    work = problem if scale == 1.0 else QPProblem(
        problem.P, problem.q, problem.A, problem.b * scale, problem.G, problem.h * scale)

    z, y, mu, ok, iters = _interior_point(work, tol, cap)
    z, y, mu = z / scale, y / scale, mu / scale
    info = {"rhs_scale": scale}
    infeas = 0.0
    if ok:
        status = Status.OPTIMAL
    else:
        p_ok, infeas, z_p1, it1 = _phase_one(work, tol, cap)
        info["phase_one_iterations"] = it1
        rel = infeas / (1 + rhs_mag * scale)
        if p_ok and rel > math.sqrt(tol):
            status = Status.INFEASIBLE
            z, y, mu = z_p1 / scale, np.zeros(problem.n_eq), np.zeros(problem.n_ineq)
        else:
            status = Status.MAX_ITERATIONS
        infeas /= scale
        log.debug("interior point did not converge; phase one violation %.3g -> %s", infeas, status)
    res = kkt_residuals(problem, z, y, mu, relative=True)
    return QPSolution(
        z=z, y=y, mu=mu,
        objective=problem.objective(z),
        status=status,
        iterations=iters,
        eq_residual=res.primal_eq,
        ineq_violation=res.primal_ineq,
        stationarity_residual=res.stationarity,
        complementarity_residual=max(res.complementarity, res.dual),
        infeasibility=infeas,
        info=info,
    )


def solve_feasibility(A=None, b=None, G=None, h=None, tol: float = DEFAULT_TOL, n: int = None,
                      max_iter: int = DEFAULT_MAX_ITER) -> QPSolution:
    """Find a point with ``Az = b, Gz <= h`` or report ``Infeasible``.

    A ``1e-12 * I`` objective picks the minimum-norm feasible point so the
    answer is unique and reproducible.
    """
    if n is None:
        n = (A if A is not None else G).shape[1]
    prob = QPProblem.build(n=n, P=np.full(n, FEASIBILITY_REG), A=A, b=b, G=G, h=h)
    return solve_qp(prob, tol=tol, max_iter=max_iter)
