"""Dense convex QP solver (ADMM operator splitting).

Solves::

    minimize    0.5 z'Hz + g'z
    subject to  l <= Az <= u

The iteration is the standard splitting with a relaxed z-update and a
per-constraint penalty rho. Problems are equilibrated (modified Ruiz) before
iterating; the active set guessed at convergence is polished by one reduced
KKT solve. All residuals reported in QpSolution refer to the original,
unscaled problem.
"""
from dataclasses import dataclass, field
import io

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import InvalidInputError

SOLVED = "solved"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

RHO_MIN, RHO_MAX = 1e-6, 1e6
RHO_EQ_FACTOR = 1e3
SCALE_MIN, SCALE_MAX = 1e-4, 1e4


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        A = np.asarray(self.A, dtype=float)
        self.A = A.reshape(0, n) if A.size == 0 else np.atleast_2d(A)
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        m = self.A.shape[0]
        if self.H.shape != (n, n):
            raise InvalidInputError(f"H must be {n}x{n}, got {self.H.shape}")
        if self.A.shape[1] != n or self.l.size != m or self.u.size != m:
            raise InvalidInputError("constraint dimensions do not match")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-12:
            raise InvalidInputError("H must be symmetric")
        if np.any(self.l > self.u):
            raise InvalidInputError("l must not exceed u")

    @property
    def n(self):
        return self.g.size

    @property
    def m(self):
        return self.A.shape[0]

    def objective(self, z):
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass
class WarmStart:
    """Primal/dual guess; optionally the step size and equilibration of a previous
    solve of a problem with the same sparsity and similar data."""

    z_init: np.ndarray
    dual_init: np.ndarray
    rho: float = None
    scaling: "Scaling" = None


@dataclass
class QpSolution:
    z: np.ndarray
    dual: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool = False
    history: list = field(default_factory=list)
    rho: float = None
    scaling: "Scaling" = None

    def warm_start(self):
        return WarmStart(self.z.copy(), self.dual.copy(), self.rho, self.scaling)


@dataclass
class Scaling:
    D: np.ndarray  # variable scaling
    E: np.ndarray  # constraint scaling
    c: float  # cost scaling

    def unscale(self, z_bar, y_bar):
        return self.D * z_bar, self.E * y_bar / self.c

    def scale(self, z, y):
        return z / self.D, self.c * y / self.E


def _inf_norm_cols(M):
    return np.abs(M).max(axis=0) if M.shape[0] else np.zeros(M.shape[1])


def _inf_norm_rows(M):
    return np.abs(M).max(axis=1) if M.shape[1] else np.zeros(M.shape[0])


def apply_scaling(p, sc, A_scaled=None):
    """Scale a problem with a known equilibration (``A_scaled`` if already known)."""
    D, E, c = sc.D, sc.E, sc.c
    H = c * (D[:, None] * p.H * D[None, :])
    H = 0.5 * (H + H.T)
    A = E[:, None] * p.A * D[None, :] if A_scaled is None else A_scaled
    return QpProblem(H, c * D * p.g, A, E * p.l, E * p.u)


def scale_problem(p, iters=10):
    """Symmetric diagonal equilibration of the KKT matrix plus a cost scale."""
    H, g, A = p.H.copy(), p.g.copy(), p.A.copy()
    n, m = p.n, p.m
    D, E, c = np.ones(n), np.ones(m), 1.0
    for _ in range(iters):
        col = np.maximum(_inf_norm_cols(H), _inf_norm_cols(A))
        col[col < SCALE_MIN] = 1.0
        d = 1.0 / np.sqrt(np.minimum(col, SCALE_MAX))
        row = _inf_norm_rows(A)
        row[row < SCALE_MIN] = 1.0
        e = 1.0 / np.sqrt(np.minimum(row, SCALE_MAX))
        H = d[:, None] * H * d[None, :]
        A = e[:, None] * A * d[None, :]
        g = d * g
        D *= d
        E *= e
        hnorm = np.mean(_inf_norm_cols(H)) if n else 1.0
        cs = max(hnorm, np.max(np.abs(g), initial=0.0))
        cs = 1.0 if cs < SCALE_MIN else 1.0 / min(cs, SCALE_MAX)
        H *= cs
        g *= cs
        c *= cs
    H = 0.5 * (H + H.T)
    scaled = QpProblem(H, g, A, E * p.l, E * p.u)
    return scaled, Scaling(D, E, c)


class QpSolver:
    """ADMM QP solver; one instance holds its own work buffers.

    ``tol`` bounds both ``max|Az - z_proj|`` and ``max|Hz + g + A'y|`` on the
    unscaled problem. Once both residuals are below ``polish_trigger`` (or the
    iteration stalls past two rho-adaptation intervals) the active set guessed
    from the iterate is polished, at most once per ``polish_every`` iterations
    and only when the guess changed; a polished point within ``tol`` ends the
    solve. With ``polish_solved=False`` the final polish only runs on solves
    that did not converge by themselves.
    """

    def __init__(self, tol=1e-6, max_iters=4000, rho=0.1, sigma=1e-6, alpha=1.6,
                 adaptive_rho=True, adaptive_interval=25, scaling=10, polish=True,
                 infeasibility_tol=1e-5, record_history=False, polish_solved=True,
                 polish_trigger=1e-3, polish_every=5):
        self.tol = tol
        self.max_iters = max_iters
        self.rho = rho
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        self.adaptive_interval = adaptive_interval
        self.scaling = scaling
        self.polish = polish
        self.infeasibility_tol = infeasibility_tol
        self.record_history = record_history
        self.polish_solved = polish_solved
        self.polish_trigger = polish_trigger
        self.polish_every = polish_every
        self._a_cache = None
        self._rho_cache = None

    def _rho_vector(self, l, u, rho):
        r = np.full(l.size, rho)
        free = np.isinf(l) & np.isinf(u)
        r[free] = RHO_MIN
        r[(u - l) < 1e-12] = RHO_EQ_FACTOR * rho
        return r

    def _factor(self, H, A, rho_vec):
        # upper Cholesky factor of H + sigma I + A' diag(rho) A
        key = self._rho_cache
        if key is not None and key[0] is A and np.array_equal(key[1], rho_vec):
            AtRA = key[2]
        else:
            AtRA = A.T @ (rho_vec[:, None] * A)
            self._rho_cache = (A, rho_vec.copy(), AtRA)
        K = H + AtRA
        K.flat[::K.shape[0] + 1] += self.sigma
        L, info = lapack.dpotrf(K, lower=False, clean=False)
        if info != 0:
            raise InvalidInputError("H must be positive semidefinite")
        return L

    def solve(self, problem, warm=None):
        reuse = (warm is not None and warm.scaling is not None
                 and warm.scaling.D.shape == (problem.n,) and warm.scaling.E.shape == (problem.m,))
        if reuse:
            sc = warm.scaling
            # the same (read-only) constraint matrix under the same scaling is
            # common when re-solving; keep its scaled copy and the rho product
            cached = self._a_cache
            if cached is not None and cached[0] is problem.A and cached[1] is sc \
                    and not problem.A.flags.writeable:
                sp = apply_scaling(problem, sc, cached[2])
            else:
                sp = apply_scaling(problem, sc)
                self._a_cache = (problem.A, sc, sp.A)
        elif self.scaling:
            sp, sc = scale_problem(problem, self.scaling)
        else:
            sp, sc = problem, Scaling(np.ones(problem.n), np.ones(problem.m), 1.0)
        H, g, A, l, u = sp.H, sp.g, sp.A, sp.l, sp.u
        n, m = sp.n, sp.m
        D, E, c = sc.D, sc.E, sc.c
        inv_D, inv_E, inv_c = 1.0 / D, 1.0 / E, 1.0 / c
        AT = np.ascontiguousarray(A.T)
        tol = self.tol

        if warm is not None:
            zw = np.asarray(warm.z_init, dtype=float)
            yw = np.asarray(warm.dual_init, dtype=float)
            if zw.shape != (n,) or yw.shape != (m,):
                raise InvalidInputError("warm start dimensions do not match the problem")
            x, y = sc.scale(zw, yw)
            z = A @ x
        else:
            x, y, z = np.zeros(n), np.zeros(m), np.zeros(m)
        Ax = z.copy()

        rho = self.rho if warm is None or warm.rho is None else float(warm.rho)
        rho_vec = self._rho_vector(l, u, rho)
        inv_rho = 1.0 / rho_vec
        L = self._factor(H, A, rho_vec)
        alpha, sigma = self.alpha, self.sigma
        potrs = lapack.dpotrs
        beta = 1.0 - alpha
        history = [] if self.record_history else None
        status = MAX_ITERS
        polished = False
        last_try, last_guess = -self.polish_every, None
        prim = dual = np.inf
        it = 0
        for it in range(1, self.max_iters + 1):
            y_prev = y
            xt = potrs(L, sigma * x - g + AT @ (rho_vec * z - y), lower=False)[0]
            zt = A @ xt
            x = alpha * xt + beta * x
            Ax = alpha * zt + beta * Ax  # A x by linearity
            zr = alpha * zt + beta * z
            z = np.minimum(np.maximum(zr + y * inv_rho, l), u)
            y = y + rho_vec * (zr - z)

            Hx = H @ x
            Aty = AT @ y
            prim = (np.abs(Ax - z) * inv_E).max() if m else 0.0
            dual = (np.abs(Hx + g + Aty) * inv_D).max() * inv_c
            if history is not None:
                history.append(max(prim, dual))
            if prim <= tol and dual <= tol:
                status = SOLVED
                break
            if m and it % 10 == 0 and self._primal_infeasible(y - y_prev, A, l, u, D, E):
                status = INFEASIBLE
                break
            if self.adaptive_rho and it % self.adaptive_interval == 0:
                new_rho = self._updated_rho(rho, Ax, z, Hx, Aty, g, prim, dual, D, E, c)
                if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                    rho = new_rho
                    rho_vec = self._rho_vector(l, u, rho)
                    inv_rho = 1.0 / rho_vec
                    L = self._factor(H, A, rho_vec)
            # early polish: near convergence, or in a slow tail (typically a
            # degenerate active set)
            interval = self.adaptive_interval
            if self.polish and it - last_try >= self.polish_every and (
                    max(prim, dual) <= self.polish_trigger
                    or (it >= 2 * interval and it % interval == 0)):
                guess = self._active_guess(z, y, l, u)
                if last_guess is None or not np.array_equal(guess, last_guess):
                    last_try, last_guess = it, guess
                    result = self._polish(H, g, A, l, u, z, y, D, E, c)
                    if result is not None and result[2] <= tol and result[3] <= tol:
                        x, y, prim, dual = result
                        status = SOLVED
                        polished = True
                        break

        if self.polish and not polished and status != INFEASIBLE \
                and (self.polish_solved or status != SOLVED):
            result = self._polish(H, g, A, l, u, z, y, D, E, c)
            if result is not None:
                xp, yp, pp, dp = result
                if max(pp, dp) <= max(prim, dual) or (pp <= tol and dp <= tol):
                    x, y, prim, dual = xp, yp, pp, dp
                    polished = True
                    if prim <= tol and dual <= tol:
                        status = SOLVED

        z_out, y_out = sc.unscale(x, y)
        return QpSolution(z_out, y_out, status, it, float(prim), float(dual), polished,
                          history or [], rho, sc)

    def _primal_infeasible(self, dy, A, l, u, D, E):
        # certificate (unscaled): A'dy ~ 0 and u'max(dy,0) + l'min(dy,0) < 0
        dy_u = E * dy
        nrm = np.max(np.abs(dy_u), initial=0.0)
        if nrm < 1e-12:
            return False
        eps = self.infeasibility_tol * nrm
        if np.max(np.abs((A.T @ dy) / D), initial=0.0) > eps:
            return False
        dy = np.where(np.abs(dy_u) > 1e-9 * nrm, dy, 0.0)
        pos, neg = dy > 0, dy < 0
        if np.any(np.isinf(u[pos])) or np.any(np.isinf(l[neg])):
            return False
        return float(u[pos] @ dy[pos] + l[neg] @ dy[neg]) < -eps / np.max(E, initial=1.0)

    def _updated_rho(self, rho, Ax, z, Hx, Aty, g, prim, dual, D, E, c):
        # balance the scaled residuals, each normalized by its own magnitude
        prim_s = np.max(np.abs(Ax - z), initial=0.0)
        dual_s = np.max(np.abs(Hx + g + Aty), initial=0.0)
        pn = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-30)
        dn = max(np.max(np.abs(Hx), initial=0.0), np.max(np.abs(Aty), initial=0.0),
                 np.max(np.abs(g), initial=0.0), 1e-30)
        ratio = (prim_s / pn) / max(dual_s / dn, 1e-30)
        return float(np.clip(rho * np.sqrt(ratio), RHO_MIN, RHO_MAX))

    def _polish(self, H, g, A, l, u, z, y, D, E, c, delta=1e-9, refine=5, passes=8):
        """Equality-constrained solve on a guessed active set.

        The guess comes from the ADMM iterate; a few active-set corrections
        (release rows whose multiplier has the wrong sign, add violated rows)
        follow before giving up.
        """
        n = H.shape[0]
        lower, upper = self._active_guess(z, y, l, u)
        for _ in range(passes):
            idx = np.flatnonzero(lower | upper)
            sol = self._reduced_kkt(H, g, A[idx], np.where(lower[idx], l[idx], u[idx]),
                                    delta, refine)
            if sol is None:
                return None
            x = sol[:n]
            y_full = np.zeros_like(y)
            y_full[idx] = sol[n:]
            Ax = A @ x
            scale = max(1.0, np.abs(sol[n:]).max() if idx.size else 0.0)
            wrong_l = lower & (y_full > 1e-9 * scale)
            wrong_u = upper & (y_full < -1e-9 * scale)
            viol_l = (Ax < l - 1e-9 * np.maximum(1.0, np.abs(l))) & ~lower
            viol_u = (Ax > u + 1e-9 * np.maximum(1.0, np.abs(u))) & ~upper
            if not (wrong_l.any() or wrong_u.any() or viol_l.any() or viol_u.any()):
                prim = (np.abs(Ax - np.clip(Ax, l, u)) / E).max() if A.shape[0] else 0.0
                dual = (np.abs(H @ x + g + A.T @ y_full) / D).max() / c
                return x, y_full, float(prim), float(dual)
            lower = (lower & ~wrong_l) | viol_l
            upper = (upper & ~wrong_u) | (viol_u & ~lower)
        return None

    @staticmethod
    def _active_guess(z, y, l, u):
        # infinite bounds never test active
        lower = z - l < -y
        upper = (u - z < y) & ~lower
        return np.stack([lower, upper])

    @staticmethod
    def _reduced_kkt(H, g, Ar, b, delta, refine):
        n, k = H.shape[0], Ar.shape[0]
        K = np.empty((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = Ar.T
        K[n:, :n] = Ar
        K[n:, n:] = 0.0
        rhs = np.concatenate([-g, b])
        Kreg = K.copy()
        d = Kreg.reshape(-1)[::n + k + 1]
        d[:n] += delta
        d[n:] -= delta
        try:
            lu = lu_factor(Kreg, overwrite_a=True, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return None
        sol = lu_solve(lu, rhs, check_finite=False)
        # iterative refinement against the unregularized matrix
        tiny = 1e-15 * max(1.0, np.abs(rhs).max())
        for _ in range(refine):
            res = rhs - K @ sol
            if np.abs(res).max() <= tiny:
                break
            sol = sol + lu_solve(lu, res, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        return sol


def solve(problem, warm=None, tol=1e-6, max_iters=4000, **options):
    """Solve ``problem`` with a fresh QpSolver."""
    return QpSolver(tol=tol, max_iters=max_iters, **options).solve(problem, warm)


# ---------------------------------------------------------------------------
# Plain-text dump format
#
#   qp <n> <m>
#   H      n rows of n values
#   g      1 row of n values
#   A      m rows of n values
#   l      1 row of m values
#   u      1 row of m values
#
# Values are whitespace separated, row-major, '%.17g'; infinities as inf/-inf.
# Each block starts with its name on its own line.


def dump_problem(problem, fh):
    own = isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__")
    f = open(fh, "w") if own else fh
    try:
        f.write(f"qp {problem.n} {problem.m}\n")
        for name, M in (("H", problem.H), ("g", problem.g[None, :]), ("A", problem.A),
                        ("l", problem.l[None, :]), ("u", problem.u[None, :])):
            f.write(f"{name}\n")
            for row in M:
                f.write(" ".join("%.17g" % v for v in row) + "\n")
    finally:
        if own:
            f.close()


def load_problem(fh):
    own = isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__")
    f = open(fh) if own else fh
    try:
        lines = [ln.strip() for ln in f if ln.strip()]
    finally:
        if own:
            f.close()
    head = lines[0].split()
    if len(head) != 3 or head[0] != "qp":
        raise InvalidInputError("not a qp dump: bad header")
    n, m = int(head[1]), int(head[2])
    pos = 1
    blocks = {}
    for name, rows, cols in (("H", n, n), ("g", 1, n), ("A", m, n), ("l", 1, m), ("u", 1, m)):
        if lines[pos] != name:
            raise InvalidInputError(f"expected block {name!r}, found {lines[pos]!r}")
        pos += 1
        data = np.loadtxt(io.StringIO("\n".join(lines[pos:pos + rows])), ndmin=2) if rows else \
            np.zeros((0, cols))
        if rows and data.shape != (rows, cols):
            raise InvalidInputError(f"block {name} has shape {data.shape}, expected {(rows, cols)}")
        blocks[name] = data.reshape(rows, cols)
        pos += rows
    return QpProblem(blocks["H"], blocks["g"][0], blocks["A"], blocks["l"][0], blocks["u"][0])
