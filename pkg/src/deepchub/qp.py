"""Convex quadratic programming via operator splitting with active-set polish.

Problems have the form::

    min  1/2 z' H z + f' z
    s.t. A_eq z  = b_eq
         A_in z <= b_in

with ``H`` symmetric positive semidefinite. The solver runs ADMM on the
equivalent two-sided form ``l <= [A_eq; A_in] z <= u`` after Ruiz
equilibration, with a cached factorization of the reduced linear system.
Once the iterates settle it identifies the active inequalities and solves
the corresponding equality-constrained KKT system directly ("polish"),
accepting the result only if the full KKT residual meets the tolerance.
A solution warm start that carries duals lets the polish step run before
any splitting iterations, which makes receding-horizon resolves cheap.

Everything is deterministic: same problem data and warm start give
bitwise-identical iterates and results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .validation import DimensionMismatch

# Rows of A with |row| entries below this are treated as empty during scaling.
_MIN_SCALE = 1e-10
_MAX_SCALE = 1e10


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"


@dataclass
class QuadraticProgram:
    """Problem data. Matrices may be dense ndarrays or scipy sparse."""

    H: object
    f: np.ndarray
    A_eq: object
    b_eq: np.ndarray
    A_in: object
    b_in: np.ndarray
    var_names: list | None = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float).ravel()
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        self.b_in = np.asarray(self.b_in, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def m_eq(self) -> int:
        return self.b_eq.shape[0]

    @property
    def m_in(self) -> int:
        return self.b_in.shape[0]

    def validate(self) -> None:
        """Check shapes, symmetry, and positive semidefiniteness (eigvalsh)."""
        n = self.n
        H = _to_dense(self.H)
        if H.shape != (n, n):
            raise DimensionMismatch(f"H must be ({n}, {n}), got {H.shape}")
        if not np.allclose(H, H.T, atol=1e-10):
            raise ValueError("H must be symmetric")
        w = np.linalg.eigvalsh(H)
        if w.size and w[0] < -1e-8 * max(1.0, w[-1]):
            raise ValueError(f"H must be positive semidefinite, min eigenvalue {w[0]:.3e}")
        for A, b, name in ((self.A_eq, self.b_eq, "A_eq"), (self.A_in, self.b_in, "A_in")):
            shape = A.shape if A is not None else (0, n)
            if shape != (b.shape[0], n):
                raise DimensionMismatch(f"{name} must be ({b.shape[0]}, {n}), got {shape}")
        if not np.all(np.isfinite(self.f)):
            raise ValueError("f contains non-finite entries")
        if not np.all(np.isfinite(self.b_eq)):
            raise ValueError("b_eq contains non-finite entries")
        if np.any(np.isnan(self.b_in)) or np.any(self.b_in == -np.inf):
            raise ValueError("b_in entries must be finite or +inf")
        if self.var_names is not None and len(self.var_names) != n:
            raise DimensionMismatch("var_names must have one label per variable")


@dataclass
class QPSolution:
    """Result of a solve.

    ``kkt_residual`` is the verified infinity-norm KKT residual of the
    returned point; for an infeasible problem it is ``inf`` and
    ``certificate`` holds the diverging dual direction.
    """

    z_star: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    objective: float
    status: SolveStatus
    kkt_residual: float
    iterations: int = 0
    certificate: np.ndarray | None = field(default=None, repr=False)


def _to_dense(M) -> np.ndarray:
    if M is None:
        return np.zeros((0, 0))
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def _inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def _matvec(A, x):
    if A is None or A.shape[0] == 0:
        return np.zeros(0)
    return A @ x


def _rmatvec(A, y, n):
    if A is None or A.shape[0] == 0 or y.size == 0:
        return np.zeros(n)
    return A.T @ y


def kkt_residual(qp: QuadraticProgram, z, duals_eq, duals_in) -> float:
    """Infinity-norm KKT residual of a primal/dual point.

    Covers stationarity, primal feasibility of both constraint blocks, dual
    feasibility (``duals_in >= 0``), and complementary slackness.
    """
    z = np.asarray(z, dtype=float).ravel()
    nu = np.asarray(duals_eq, dtype=float).ravel()
    lam = np.asarray(duals_in, dtype=float).ravel()
    if z.shape[0] != qp.n:
        raise DimensionMismatch(f"z must have {qp.n} entries, got {z.shape[0]}")
    if nu.shape[0] != qp.m_eq or lam.shape[0] != qp.m_in:
        raise DimensionMismatch("dual dimensions do not match the constraint blocks")

    stat = qp.H @ z + qp.f
    stat = stat + _rmatvec(qp.A_eq, nu, qp.n) + _rmatvec(qp.A_in, lam, qp.n)
    r = _inf_norm(stat)
    if qp.m_eq:
        r = max(r, _inf_norm(_matvec(qp.A_eq, z) - qp.b_eq))
    if qp.m_in:
        slack = _matvec(qp.A_in, z) - qp.b_in
        finite = np.isfinite(qp.b_in)
        r = max(r, _inf_norm(np.maximum(slack[finite], 0.0)))
        r = max(r, _inf_norm(np.maximum(-lam, 0.0)))
        comp = lam[finite] * slack[finite]
        r = max(r, _inf_norm(comp))
    return r


def objective_value(qp: QuadraticProgram, z) -> float:
    z = np.asarray(z, dtype=float).ravel()
    return float(0.5 * z @ (qp.H @ z) + qp.f @ z)


# ---------------------------------------------------------------------------
# Text dump


def dump_qp(qp: QuadraticProgram, path) -> None:
    """Write the problem to a plain-text file (dims, then each block)."""
    path = Path(path)
    H = _to_dense(qp.H)
    A_eq = _to_dense(qp.A_eq) if qp.m_eq else np.zeros((0, qp.n))
    A_in = _to_dense(qp.A_in) if qp.m_in else np.zeros((0, qp.n))
    with open(path, "w") as fh:
        fh.write(f"n {qp.n} m_eq {qp.m_eq} m_in {qp.m_in}\n")
        for name, block in (
            ("H", H), ("f", qp.f[None, :]),
            ("A_eq", A_eq), ("b_eq", qp.b_eq[None, :] if qp.m_eq else np.zeros((0, 0))),
            ("A_in", A_in), ("b_in", qp.b_in[None, :] if qp.m_in else np.zeros((0, 0))),
        ):
            fh.write(name + "\n")
            for row in block:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write("var_names\n")
        fh.write((" ".join(qp.var_names) if qp.var_names else "-") + "\n")


def load_qp(path) -> QuadraticProgram:
    """Read a problem written by :func:`dump_qp`."""
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    n, m_eq, m_in = int(head[1]), int(head[3]), int(head[5])
    idx = 1
    blocks = {}
    order = [("H", n), ("f", 1), ("A_eq", m_eq), ("b_eq", 1 if m_eq else 0),
             ("A_in", m_in), ("b_in", 1 if m_in else 0)]
    for name, rows in order:
        assert lines[idx].strip() == name, f"expected block {name}"
        idx += 1
        data = [
            np.fromiter((float(tok) for tok in lines[idx + r].split()), dtype=float)
            for r in range(rows)
        ]
        idx += rows
        blocks[name] = np.array(data) if data else np.zeros((0, n))
    assert lines[idx].strip() == "var_names"
    raw = lines[idx + 1].strip()
    names = None if raw == "-" else raw.split()
    return QuadraticProgram(
        H=blocks["H"], f=blocks["f"].ravel(),
        A_eq=blocks["A_eq"].reshape(m_eq, n), b_eq=blocks["b_eq"].ravel(),
        A_in=blocks["A_in"].reshape(m_in, n), b_in=blocks["b_in"].ravel(),
        var_names=names,
    )


# ---------------------------------------------------------------------------
# Solver internals


def _diagonal_of(H, n: int):
    """Return the diagonal of H if H is exactly diagonal, else None."""
    if sp.issparse(H):
        d = H.diagonal()
        off = H - sp.diags(d, shape=H.shape)
        return d if off.nnz == 0 else None
    H = np.asarray(H, dtype=float)
    d = np.diag(H).copy()
    if np.count_nonzero(H) == np.count_nonzero(d):
        return d
    return None


class _Structure:
    """Per-problem-structure cache: scaling, factorizations, polish blocks.

    Keyed on the identity of (H, A_eq, A_in); reused across solves that share
    those objects, which is the receding-horizon hot path.
    """

    def __init__(self, qp: QuadraticProgram, scaling_iters: int):
        self.key = (id(qp.H), id(qp.A_eq), id(qp.A_in))
        # Strong refs so the id()s above cannot be recycled.
        self._refs = (qp.H, qp.A_eq, qp.A_in)
        n, me, mi = qp.n, qp.m_eq, qp.m_in
        self.n, self.me, self.mi = n, me, mi
        self.m = me + mi

        self.h_diag = _diagonal_of(qp.H, n)
        self.H_dense = None if self.h_diag is not None else _to_dense(qp.H)

        blocks = []
        if me:
            blocks.append(sp.csr_matrix(qp.A_eq))
        if mi:
            blocks.append(sp.csr_matrix(qp.A_in))
        if blocks:
            A = sp.vstack(blocks, format="csr")
        else:
            A = sp.csr_matrix((0, n))
        # Dense A is faster on problems this package produces; keep sparse
        # only when the dense array would be large.
        self.A_dense = A.toarray() if A.shape[0] * n <= 2.5e7 else None
        self.A_sparse = A if self.A_dense is None else None

        self._ruiz(scaling_iters)

        self.factor_cache = {}     # rho_key -> cho_factor of M
        self.polish_cache = {}     # active-set bytes -> direct factorization
        self.polish_base = None    # cached constant blocks for range-space polish

    # -- scaled operators ---------------------------------------------------

    def A_mat(self):
        return self.A_dense if self.A_dense is not None else self.A_sparse

    def Ax(self, x):
        if self.m == 0:
            return np.zeros(0)
        return self.A_scaled @ x

    def ATy(self, y):
        if self.m == 0:
            return np.zeros(self.n)
        return self.A_scaled.T @ y

    def Px(self, x):
        if self.h_diag is not None:
            return self.p_scaled_diag * x
        return self.P_scaled @ x

    def _ruiz(self, iters: int):
        """Ruiz equilibration of [P A'; A 0] plus scalar cost scaling."""
        n, m = self.n, self.m
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        A = self.A_mat()
        h = self.h_diag

        def col_inf_A(Asc):
            if m == 0:
                return np.zeros(n)
            if sp.issparse(Asc):
                return np.asarray(abs(Asc).max(axis=0).todense()).ravel()
            return np.abs(Asc).max(axis=0) if Asc.shape[0] else np.zeros(n)

        def row_inf_A(Asc):
            if m == 0:
                return np.zeros(0)
            if sp.issparse(Asc):
                return np.asarray(abs(Asc).max(axis=1).todense()).ravel()
            return np.abs(Asc).max(axis=1) if Asc.shape[1] else np.zeros(m)

        A_s = A.copy() if A is not None else None
        if h is not None:
            P_col = np.abs(h).astype(float)
            P_s = None
        else:
            P_s = self.H_dense.copy()
            P_col = np.abs(P_s).max(axis=0)

        for _ in range(iters):
            if P_s is not None:
                P_col = np.abs(P_s).max(axis=0) if n else np.zeros(0)
            else:
                P_col = np.abs(c * h * d * d)
            cols = np.maximum(P_col, col_inf_A(A_s))
            dd = 1.0 / np.sqrt(np.clip(cols, _MIN_SCALE, _MAX_SCALE))
            rows = row_inf_A(A_s)
            de = 1.0 / np.sqrt(np.clip(rows, _MIN_SCALE, _MAX_SCALE))
            d *= dd
            e *= de
            if P_s is not None:
                P_s = (P_s * dd).T * dd
                P_s = P_s.T
            if A_s is not None and m:
                if sp.issparse(A_s):
                    A_s = sp.diags(de) @ A_s @ sp.diags(dd)
                else:
                    A_s = (A_s * dd) * de[:, None]
            # cost scaling keeps the scaled Hessian near unit magnitude
            if P_s is not None:
                mean_col = float(np.mean(np.abs(P_s).max(axis=0))) if n else 1.0
            else:
                mean_col = float(np.mean(np.abs(c * h * d * d))) if n else 1.0
            gamma = 1.0 / max(mean_col, _MIN_SCALE) if mean_col > 0 else 1.0
            gamma = min(max(gamma, 1e-6), 1e6)
            c *= gamma
            if P_s is not None:
                P_s *= gamma

        self.d, self.e, self.c = d, e, c
        self.A_scaled = A_s
        if h is not None:
            self.p_scaled_diag = c * h * d * d
            self.P_scaled = None
        else:
            self.P_scaled = P_s
            self.p_scaled_diag = None

    def factorization(self, rho_vec, sigma: float):
        """cho_factor of M = P_s + sigma I + A_s' diag(rho) A_s, cached."""
        key = rho_vec.tobytes()
        hit = self.factor_cache.get(key)
        if hit is not None:
            return hit
        n = self.n
        if self.P_scaled is not None:
            M = self.P_scaled.copy()
        else:
            M = np.zeros((n, n))
            M[np.diag_indices(n)] = self.p_scaled_diag
        M[np.diag_indices(n)] += sigma
        if self.m:
            A = self.A_scaled
            if sp.issparse(A):
                M += (A.multiply(rho_vec[:, None]).T @ A).toarray()
            else:
                M += (A * rho_vec[:, None]).T @ A
        chol = sla.cho_factor(M, lower=True, check_finite=False)
        if len(self.factor_cache) > 8:
            self.factor_cache.clear()
        self.factor_cache[key] = chol
        return chol


class QpSolver:
    """Deterministic operator-splitting QP solver with active-set polish.

    A single instance caches per-structure factorizations, so reusing one
    solver across problems that share (H, A_eq, A_in) objects makes
    receding-horizon resolves much cheaper than cold solves.
    """

    def __init__(self, tol: float = 1e-6, max_iter: int = 50000,
                 sigma: float = 1e-6, rho: float = 0.1, alpha: float = 1.6,
                 check_interval: int = 25, scaling_iters: int = 10,
                 polish_threshold: int = 4000):
        self.tol = tol
        self.max_iter = max_iter
        self.sigma = sigma
        self.rho0 = rho
        self.alpha = alpha
        self.check_interval = check_interval
        self.scaling_iters = scaling_iters
        self.polish_threshold = polish_threshold
        self._structures = {}

    # -- public entry --------------------------------------------------------

    def solve(self, qp: QuadraticProgram, warm_start: QPSolution | None = None) -> QPSolution:
        n = qp.n
        if qp.f.shape[0] != n:
            raise DimensionMismatch("f length does not define n consistently")
        st = self._structure(qp)

        # Fast path: the warm start's active set solved directly. Capped at
        # a few refinement rounds so a stale guess fails over to the
        # splitting iterations quickly.
        if warm_start is not None and warm_start.duals_in.shape[0] == qp.m_in:
            act = np.flatnonzero(warm_start.duals_in > 1e-12)
            sol = self._try_polish(qp, st, act, iterations=0, max_rounds=12)
            if sol is not None:
                return sol

        return self._admm(qp, st, warm_start)

    # -- caching ---------------------------------------------------------------

    def _structure(self, qp: QuadraticProgram) -> _Structure:
        key = (id(qp.H), id(qp.A_eq), id(qp.A_in))
        st = self._structures.get(key)
        fresh = st is not None and st._refs[0] is qp.H \
            and st._refs[1] is qp.A_eq and st._refs[2] is qp.A_in
        if not fresh:
            if len(self._structures) > 8:
                self._structures.clear()
            st = _Structure(qp, self.scaling_iters)
            self._structures[key] = st
        return st

    # -- ADMM ------------------------------------------------------------------

    def _admm(self, qp: QuadraticProgram, st: _Structure, warm_start) -> QPSolution:
        n, me, mi, m = st.n, st.me, st.mi, st.m
        d, e, c = st.d, st.e, st.c
        sigma, alpha = self.sigma, self.alpha

        q_s = c * d * qp.f
        l = np.concatenate([qp.b_eq, np.full(mi, -np.inf)]) if m else np.zeros(0)
        u = np.concatenate([qp.b_eq, qp.b_in]) if m else np.zeros(0)
        l_s = e * l if m else l
        u_s = e * u if m else u

        rho_bar = self.rho0
        rho_vec = np.full(m, rho_bar)
        rho_vec[:me] = rho_bar * 1e3
        chol = st.factorization(rho_vec, sigma)

        if warm_start is not None and warm_start.z_star.shape[0] == n:
            x = warm_start.z_star / d
            y_orig = np.concatenate([warm_start.duals_eq, warm_start.duals_in]) \
                if m else np.zeros(0)
            y = c * y_orig / e if m else np.zeros(0)
            z = np.clip(st.Ax(x), l_s, u_s) if m else np.zeros(0)
        else:
            x = np.zeros(n)
            y = np.zeros(m)
            z = np.zeros(m)

        y_prev_check = y.copy()
        rho_updates = 0
        best = None
        last_polish_act = None

        k = 0
        while k < self.max_iter:
            # one splitting iteration
            rhs = sigma * x - q_s + st.ATy(rho_vec * z - y)
            x_tld = sla.cho_solve(chol, rhs, check_finite=False)
            ax_tld = st.Ax(x_tld)
            x = alpha * x_tld + (1.0 - alpha) * x
            if m:
                zt = alpha * ax_tld + (1.0 - alpha) * z + y / rho_vec
                z_new = np.clip(zt, l_s, u_s)
                y = rho_vec * (zt - z_new)
                z = z_new
            k += 1

            if k % self.check_interval != 0 and k < self.max_iter:
                continue

            # unscaled residuals
            x_orig = d * x
            y_orig = e * y / c if m else np.zeros(0)
            ax_orig = (st.Ax(x) / e) if m else np.zeros(0)
            z_orig = z / e if m else np.zeros(0)
            r_prim = _inf_norm(ax_orig - z_orig) if m else 0.0
            grad = qp.H @ x_orig + qp.f + (
                _rmatvec(qp.A_eq, y_orig[:me], n) + _rmatvec(qp.A_in, y_orig[me:], n)
                if m else 0.0
            )
            r_dual = _inf_norm(grad)

            act = np.flatnonzero(y_orig[me:] > 1e-12) if mi else np.zeros(0, dtype=int)
            act_key = act.tobytes()
            if act_key != last_polish_act or max(r_prim, r_dual) <= 100.0 * self.tol:
                if act_key != last_polish_act:
                    last_polish_act = act_key
                    sol = self._try_polish(qp, st, act, iterations=k)
                    if sol is not None:
                        return sol
                if max(r_prim, r_dual) <= 10.0 * self.tol:
                    lam = np.maximum(y_orig[me:], 0.0) if mi else np.zeros(0)
                    res = kkt_residual(qp, x_orig, y_orig[:me], lam)
                    if res <= self.tol:
                        return QPSolution(
                            z_star=x_orig, duals_eq=y_orig[:me], duals_in=lam,
                            objective=objective_value(qp, x_orig),
                            status=SolveStatus.OPTIMAL, kkt_residual=res, iterations=k,
                        )
                    best = (x_orig, y_orig, res)

            # primal infeasibility: diverging dual direction
            if m:
                dy = (y - y_prev_check) * e / c
                dy_norm = _inf_norm(dy)
                if dy_norm > 1e-12:
                    dyn = dy / dy_norm
                    at_dy = _rmatvec(qp.A_eq, dyn[:me], n) + _rmatvec(qp.A_in, dyn[me:], n)
                    support = qp.b_eq @ dyn[:me] if me else 0.0
                    lam_dir = dyn[me:]
                    finite = np.isfinite(qp.b_in)
                    support += qp.b_in[finite] @ np.maximum(lam_dir[finite], 0.0)
                    ok_dir = _inf_norm(np.maximum(-lam_dir, 0.0)) <= 1e-8 \
                        and np.all(lam_dir[~finite] <= 1e-8)
                    if _inf_norm(at_dy) <= 1e-8 and ok_dir and support <= -1e-8:
                        return QPSolution(
                            z_star=d * x, duals_eq=(e * y / c)[:me],
                            duals_in=np.maximum((e * y / c)[me:], 0.0),
                            objective=np.nan, status=SolveStatus.INFEASIBLE,
                            kkt_residual=np.inf, iterations=k, certificate=dy,
                        )
                y_prev_check = y.copy()

            # residual-balancing rho adaptation
            if m and rho_updates < 12 and k % (4 * self.check_interval) == 0:
                nax = _inf_norm(ax_orig)
                nz = _inf_norm(z_orig)
                npx = _inf_norm(qp.H @ x_orig)
                nq = _inf_norm(qp.f)
                naty = _inf_norm(grad - qp.H @ x_orig - qp.f + 0.0) if m else 0.0
                prim_rel = r_prim / max(nax, nz, 1e-10)
                dual_rel = r_dual / max(npx, nq, naty, 1e-10)
                ratio = np.sqrt(prim_rel / max(dual_rel, 1e-16))
                if ratio > 5.0 or ratio < 0.2:
                    rho_bar = float(np.clip(rho_bar * ratio, 1e-6, 1e6))
                    rho_vec = np.full(m, rho_bar)
                    rho_vec[:me] = min(rho_bar * 1e3, 1e9)
                    chol = st.factorization(rho_vec, sigma)
                    rho_updates += 1

        # out of iterations
        x_orig = d * x
        y_orig = e * y / c if m else np.zeros(0)
        lam = np.maximum(y_orig[me:], 0.0) if mi else np.zeros(0)
        res = kkt_residual(qp, x_orig, y_orig[:me] if me else np.zeros(0), lam)
        status = SolveStatus.OPTIMAL if res <= self.tol else SolveStatus.MAX_ITER
        if best is not None and best[2] < res:
            x_orig, y_orig, res = best
            lam = np.maximum(y_orig[me:], 0.0) if mi else np.zeros(0)
            status = SolveStatus.OPTIMAL if res <= self.tol else SolveStatus.MAX_ITER
        return QPSolution(
            z_star=x_orig, duals_eq=y_orig[:me] if me else np.zeros(0),
            duals_in=lam, objective=objective_value(qp, x_orig),
            status=status, kkt_residual=res, iterations=self.max_iter,
        )

    # -- polish ----------------------------------------------------------------

    def _try_polish(self, qp: QuadraticProgram, st: _Structure, act: np.ndarray,
                    iterations: int, max_rounds: int = 30) -> QPSolution | None:
        """Refine an active-set guess to the exact optimum, verifying first.

        Each round solves the equality-constrained problem of the current
        guess, then drops rows with negative multipliers and adds violated
        rows. Every accepted answer passes the full KKT residual check, so
        the refinement loop is only a heuristic for finding the right set.
        """
        act = np.asarray(act, dtype=np.int64)
        seen = set()
        for _ in range(max_rounds):
            key = act.tobytes()
            if key in seen:
                return None
            seen.add(key)
            try:
                out = self._direct_kkt(qp, st, act)
            except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
                return None
            if out is None:
                return None
            z, nu, lam_act = out
            lam = np.zeros(qp.m_in)
            lam[act] = lam_act
            res = kkt_residual(qp, z, nu, lam)
            if np.isfinite(res) and res <= self.tol:
                return QPSolution(
                    z_star=z, duals_eq=nu, duals_in=lam,
                    objective=objective_value(qp, z),
                    status=SolveStatus.OPTIMAL, kkt_residual=res,
                    iterations=iterations,
                )
            if not np.all(np.isfinite(z)):
                return None
            keep = act[lam_act >= -self.tol] if act.size else act
            viol = (qp.A_in @ z) - qp.b_in if qp.m_in else np.zeros(0)
            add = np.flatnonzero(viol > self.tol)
            new_act = np.unique(np.concatenate([keep, add]))
            if new_act.shape[0] == act.shape[0] and np.array_equal(new_act, act):
                return None
            if st.me + new_act.shape[0] > st.n and st.h_diag is not None:
                return None
            act = new_act
        return None

    def _direct_kkt(self, qp: QuadraticProgram, st: _Structure, act: np.ndarray):
        n, me = st.n, st.me
        na = act.shape[0]
        if st.h_diag is not None and np.min(st.h_diag) > 1e-14 and me + na <= n:
            return self._range_space(qp, st, act)
        if n <= self.polish_threshold:
            return self._nullspace(qp, act)
        return None

    def _range_space(self, qp: QuadraticProgram, st: _Structure, act: np.ndarray):
        """Strictly convex diagonal H: whitened projector method.

        In whitened variables w = H^(1/2) z the objective is a pure norm, so
        the equality block B = A_eq H^(-1/2) can be handled through one
        singular value decomposition per structure (accurate at the singular
        value level - the equality rows of data-driven problems can be very
        ill conditioned, and any Gram-matrix route would square that). Per
        active set only the active rows projected onto null(B) need a small
        Cholesky factor, which is cached by active-set pattern. One
        refinement sweep mops up roundoff.
        """
        n, me = st.n, st.me
        hs = 1.0 / np.sqrt(st.h_diag)       # H^(-1/2) diagonal
        na = act.shape[0]
        delta = 1e-11

        if st.polish_base is None:
            if me:
                A_eq = sp.csr_matrix(qp.A_eq)
                B = (A_eq.multiply(hs[None, :])).toarray()
                U, s, Vt = np.linalg.svd(B, full_matrices=False)
                r = int(np.count_nonzero(s > (s[0] if s.size else 0.0) * 1e-10))
                st.polish_base = {
                    "A_eq": A_eq,
                    "U_r": np.ascontiguousarray(U[:, :r]),
                    "s_r": s[:r],
                    "V_r": np.ascontiguousarray(Vt[:r]),   # (r, n)
                }
            else:
                st.polish_base = {"A_eq": None, "U_r": None, "s_r": None, "V_r": None}
        base = st.polish_base
        V_r = base["V_r"]

        def null_proj(x):
            # project onto null(B); identity when there are no equalities
            if me:
                return x - V_r.T @ (V_r @ x)
            return x

        if na:
            A_act = qp.A_in[act] if not sp.issparse(qp.A_in) else qp.A_in[act].toarray()
            B_a = A_act * hs[None, :]
        else:
            A_act = None
            B_a = None

        key = act.tobytes()
        fac = st.polish_cache.get(key)
        if fac is None:
            if na:
                M = (B_a @ V_r.T) if me else None          # (na, r)
                CC = B_a @ B_a.T
                if me:
                    CC = CC - M @ M.T
                CC[np.diag_indices(na)] += delta * max(1.0, float(np.trace(CC)) / max(na, 1))
                chol_CC = sla.cho_factor(CC, lower=True, check_finite=False)
                fac = (M, chol_CC)
            else:
                fac = (None, None)
            if len(st.polish_cache) > 16:
                st.polish_cache.clear()
            st.polish_cache[key] = fac
        M, chol_CC = fac

        def c_apply(x):
            # C x with C = B_a P_null
            out = B_a @ x
            if me:
                out -= M @ (V_r @ x)
            return out

        def ct_apply(y):
            # C' y
            out = B_a.T @ y
            if me:
                out -= V_r.T @ (M.T @ y)
            return out

        b_act = qp.b_in[act] if na else np.zeros(0)

        def solve_once(c_t, rb, rba):
            # Dw + B' dnu + B_a' dlam = c_t ; B Dw = rb ; B_a Dw = rba
            if me:
                dw_r = V_r.T @ ((base["U_r"].T @ rb) / base["s_r"])
            else:
                dw_r = np.zeros(n)
            if na:
                rhs = c_apply(c_t) - rba + (B_a @ dw_r)
                dlam = sla.cho_solve(chol_CC, rhs, check_finite=False)
                dw = dw_r + null_proj(c_t) - ct_apply(dlam)
            else:
                dlam = np.zeros(0)
                dw = dw_r + null_proj(c_t)
            if me:
                resid = c_t - dw
                if na:
                    resid = resid - B_a.T @ dlam
                dnu = base["U_r"] @ ((V_r @ resid) / base["s_r"])
            else:
                dnu = np.zeros(0)
            return dw, dnu, dlam

        w, nu, lam = solve_once(-(hs * qp.f), qp.b_eq, b_act)
        z = hs * w
        # one refinement sweep on the full KKT residuals
        for _ in range(2):
            r_stat = -(qp.f + st.h_diag * z)
            if me:
                r_stat = r_stat - base["A_eq"].T @ nu
            if na:
                r_stat = r_stat - A_act.T @ lam
            r_b = qp.b_eq - (base["A_eq"] @ z if me else np.zeros(0))
            r_ba = b_act - (A_act @ z) if na else np.zeros(0)
            dw, dnu, dlam = solve_once(hs * r_stat, r_b, r_ba)
            z = z + hs * dw
            nu = nu + dnu
            lam = lam + dlam
        return z, nu, lam

    def _nullspace(self, qp: QuadraticProgram, act: np.ndarray):
        """General PSD H: dense SVD nullspace method on the active-set KKT."""
        n = qp.n
        A_eq = _to_dense(qp.A_eq) if qp.m_eq else np.zeros((0, n))
        A_in = _to_dense(qp.A_in) if qp.m_in else np.zeros((0, n))
        Abar = np.vstack([A_eq, A_in[act]]) if (qp.m_eq or act.size) else np.zeros((0, n))
        bbar = np.concatenate([qp.b_eq, qp.b_in[act]])
        H = _to_dense(qp.H)

        if Abar.shape[0] == 0:
            w, V = np.linalg.eigh(H)
            if w.size == 0 or w[0] <= 1e-12 * max(1.0, w[-1] if w.size else 1.0):
                return None
            z = np.linalg.solve(H, -qp.f)
            return z, np.zeros(0), np.zeros(0)

        U, s, Vt = np.linalg.svd(Abar, full_matrices=True)
        r = int(np.count_nonzero(s > 1e-10 * (s[0] if s.size else 1.0)))
        # particular solution and feasibility of the active-set guess
        x_p = Vt[:r].T @ ((U[:, :r].T @ bbar) / s[:r])
        if _inf_norm(Abar @ x_p - bbar) > 1e-7 * max(1.0, _inf_norm(bbar)):
            return None
        Z = Vt[r:].T
        if Z.shape[1]:
            K = Z.T @ H @ Z
            w = np.linalg.eigvalsh(K)
            if w.size and w[0] <= 1e-12 * max(1.0, w[-1]):
                return None
            v = np.linalg.solve(K, -Z.T @ (H @ x_p + qp.f))
            z = x_p + Z @ v
        else:
            z = x_p
        g = -(H @ z + qp.f)
        dual = U[:, :r] @ ((Vt[:r] @ g) / s[:r])
        nu = dual[: qp.m_eq]
        lam_act = dual[qp.m_eq:]
        return z, nu, lam_act


def solve_qp(qp: QuadraticProgram, warm_start: QPSolution | None = None,
             tol: float = 1e-6, max_iter: int = 50000) -> QPSolution:
    """Solve a QP with a fresh solver instance (no cross-call caching)."""
    return QpSolver(tol=tol, max_iter=max_iter).solve(qp, warm_start=warm_start)
