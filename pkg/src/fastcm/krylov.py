"""Inner linear solvers and the sparse approximate inverse preconditioner.

Both solvers take the operator as a callable ``u -> A u`` and an optional
right preconditioner ``v -> P v``; they solve ``A P y = b`` and return
``x = P y``. Reported residuals are always recomputed as
``||b - A x|| / ||b||``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SAI_PRESETS = {
    "plate": (0.01, 0.014, 0.18),
    "uav": (0.01, 0.012, 0.07),
    "dreamliner": (0.008, 0.01, 0.07),
}


@dataclass
class IterativeSolveReport:
    method: str
    iterations: int
    residual: float
    converged: bool
    restarts: int = 0
    history: list = field(default_factory=list, repr=False)

    def write_csv(self, path):
        write_telemetry_csv(path, [self])


def write_telemetry_csv(path, reports):
    """Per-iteration residual estimates of one or more solves."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solve", "method", "iteration", "residual"])
        for n, rep in enumerate(reports):
            for it, res in rep.history:
                w.writerow([n, rep.method, it, f"{res:.6e}"])


def _as_callable(a):
    if callable(a):
        return a
    if hasattr(a, "matvec"):
        return a.matvec
    return lambda u: a @ u


def _check(b, tol):
    if not 0 < tol < 1:
        raise ValueError(f"tolerance must lie in (0, 1), got {tol}")
    b = np.asarray(b, dtype=complex)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        raise ValueError("right-hand side is zero")
    return b, bnorm


def gmres(apply_a, b, tol=1e-3, restart=60, maxit=1000, precond=None, x0=None, callback=None):
    """Restarted GMRES with right preconditioning.

    ``maxit`` bounds the total number of Arnoldi steps. Returns ``(x, report)``;
    on non-convergence ``x`` is the iterate with the smallest true residual.
    """
    matvec = _as_callable(apply_a)
    prec = _as_callable(precond) if precond is not None else (lambda v: v)
    b, bnorm = _check(b, tol)
    n = b.size
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    r = b - matvec(x) if x0 is not None else b.copy()
    true_res = np.linalg.norm(r) / bnorm
    best_x, best_res = x.copy(), true_res
    history = [(0, true_res)]
    total = 0
    restarts = 0
    m = max(1, min(restart, n))
    while true_res > tol and total < maxit:
        beta = np.linalg.norm(r)
        v = np.zeros((m + 1, n), dtype=complex)
        h = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        v[0] = r / beta
        j = 0
        while j < m and total < maxit:
            w = matvec(prec(v[j]))
            for i in range(j + 1):
                h[i, j] = np.vdot(v[i], w)
                w = w - h[i, j] * v[i]
            h[j + 1, j] = np.linalg.norm(w)
            breakdown = h[j + 1, j].real <= 1e-14 * beta
            if not breakdown:
                v[j + 1] = w / h[j + 1, j]
            for i in range(j):
                t = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
                h[i + 1, j] = -np.conj(sn[i]) * h[i, j] + cs[i] * h[i + 1, j]
                h[i, j] = t
            a, c = h[j, j], h[j + 1, j]
            denom = math.hypot(abs(a), abs(c))
            if denom == 0:
                cs[j], sn[j] = 1.0, 0.0
            elif abs(a) == 0:
                cs[j], sn[j] = 0.0, 1.0
            else:
                cs[j] = abs(a) / denom
                sn[j] = (a / abs(a)) * np.conj(c) / denom
            h[j, j] = cs[j] * a + sn[j] * c
            h[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            j += 1
            total += 1
            est = abs(g[j]) / bnorm
            history.append((total, est))
            if callback is not None:
                callback(total, est)
            if est <= tol or breakdown:
                break
        y = np.linalg.solve(np.triu(h[:j, :j]), g[:j]) if j else np.zeros(0)
        x = x + prec(y @ v[:j])
        r = b - matvec(x)
        true_res = np.linalg.norm(r) / bnorm
        if true_res < best_res:
            best_x, best_res = x.copy(), true_res
        if true_res > tol and total < maxit:
            restarts += 1
    converged = best_res <= tol
    report = IterativeSolveReport("gmres", total, float(best_res), converged, restarts, history)
    return best_x, report


def bicgstab(apply_a, b, tol=1e-3, maxit=1000, precond=None, x0=None, callback=None):
    """Right-preconditioned BiCGSTAB. One iteration costs two matvecs."""
    matvec = _as_callable(apply_a)
    prec = _as_callable(precond) if precond is not None else (lambda v: v)
    b, bnorm = _check(b, tol)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    r = b - matvec(x) if x0 is not None else b.copy()
    r_hat = r.copy()
    rho = alpha = omega = 1.0 + 0j
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    history = [(0, np.linalg.norm(r) / bnorm)]
    best_x, best_res = x.copy(), history[0][1]
    it = 0
    while it < maxit and best_res > tol:
        it += 1
        rho_new = np.vdot(r_hat, r)
        if rho_new == 0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = prec(p)
        v = matvec(p_hat)
        denom = np.vdot(r_hat, v)
        if denom == 0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x = x + alpha * p_hat
            r = s
        else:
            s_hat = prec(s)
            t = matvec(s_hat)
            tt = np.vdot(t, t)
            omega = np.vdot(t, s) / tt if tt != 0 else 0.0
            x = x + alpha * p_hat + omega * s_hat
            r = s - omega * t
        est = np.linalg.norm(r) / bnorm
        history.append((it, est))
        if callback is not None:
            callback(it, est)
        if est <= tol:
            true_res = np.linalg.norm(b - matvec(x)) / bnorm
            if true_res < best_res:
                best_x, best_res = x.copy(), true_res
            if true_res > tol:
                r = b - matvec(x)
        if omega == 0:
            break
    true_res = np.linalg.norm(b - matvec(x)) / bnorm
    if true_res < best_res:
        best_x, best_res = x.copy(), true_res
    return best_x, IterativeSolveReport("bicgstab", it, float(best_res), best_res <= tol, 0, history)


SOLVERS = {"gmres": gmres, "bicgstab": bicgstab}


# ----------------------------------------------------------------------
# sparse approximate inverse


@dataclass(eq=False)
class SaiPreconditioner:
    """Right preconditioner ``P`` approximately minimizing ``||I - Z_near P||_F``."""

    matrix: sp.csr_matrix
    thresholds: tuple
    fallback_columns: np.ndarray

    def matvec(self, v):
        return self.matrix @ v

    __call__ = matvec

    @property
    def nnz(self):
        return self.matrix.nnz


def sai_pattern(near, eps1, eps2, eps3):
    """Column patterns of the preconditioner, as a CSC boolean matrix.

    * ``eps1``: entries with ``|Z_ij| / sqrt(|Z_ii Z_jj|) < eps1`` are dropped
      from the near block to form the pattern source.
    * ``eps2``: within each retained column, entries below ``eps2`` times
      the column's largest magnitude are pruned.
    * ``eps3``: each column keeps at most ``ceil(eps3 * m_j)`` entries, the
      largest first, where ``m_j`` is the column's count in the near block.

    The diagonal is always kept.
    """
    for name, e in (("eps1", eps1), ("eps2", eps2), ("eps3", eps3)):
        if not 0 < e < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {e}")
    z = sp.csc_matrix(near)
    n = z.shape[0]
    diag = np.abs(z.diagonal())
    if np.any(diag == 0):
        raise ValueError("near block has a zero diagonal entry")
    coo = z.tocoo()
    mag = np.abs(coo.data)
    nu = mag / np.sqrt(diag[coo.row] * diag[coo.col])
    colmax = np.zeros(n)
    np.maximum.at(colmax, coo.col, mag)
    keep = (nu >= eps1) & (mag >= eps2 * colmax[coo.col]) | (coo.row == coo.col)
    near_count = np.bincount(coo.col, minlength=n)
    cap = np.ceil(eps3 * near_count).astype(int)
    rows, cols = coo.row[keep], coo.col[keep]
    score = np.where(rows == cols, np.inf, nu[keep])
    order = np.lexsort((-score, cols))
    rows, cols = rows[order], cols[order]
    start = np.searchsorted(cols, np.arange(n))
    rank = np.arange(len(cols)) - start[cols]
    sel = rank < np.maximum(cap[cols], 1)
    return sp.csc_matrix((np.ones(sel.sum(), bool), (rows[sel], cols[sel])), shape=(n, n))


def build_sai(near, eps1=0.01, eps2=0.014, eps3=0.18, pattern=None):
    """Column-wise least-squares SAI over a thresholded near pattern.

    ``near`` is the sparse near block (or a ``NearBlock``). Each column
    ``p_j`` minimizes ``||e_j - Z_near[:, J] p_J||_2`` over its pattern ``J``
    using every nonzero row of those columns. A rank-deficient local problem
    falls back to the Jacobi entry ``1 / Z_jj``.
    """
    z = sp.csc_matrix(getattr(near, "matrix", near))
    n = z.shape[0]
    pat = sp.csc_matrix(pattern) if pattern is not None else sai_pattern(z, eps1, eps2, eps3)
    indptr, indices = [0], []
    data = []
    fallback = []
    zd = z.diagonal()
    for j in range(n):
        J = np.sort(pat.indices[pat.indptr[j] : pat.indptr[j + 1]])
        sub = z[:, J]
        rows = np.unique(sub.indices)
        a = sub[rows].toarray()
        e = (rows == j).astype(complex)
        sol, _, rank, _ = np.linalg.lstsq(a, e, rcond=None)
        if rank < len(J) or not np.all(np.isfinite(sol)):
            fallback.append(j)
            J = np.array([j])
            sol = np.array([1.0 / zd[j]])
        indices.extend(J.tolist())
        data.append(sol)
        indptr.append(indptr[-1] + len(J))
    p = sp.csc_matrix((np.concatenate(data), np.array(indices), np.array(indptr)), shape=(n, n)).tocsr()
    return SaiPreconditioner(p, (eps1, eps2, eps3), np.array(fallback, dtype=np.int64))


def jacobi(near):
    z = getattr(near, "matrix", near)
    return SaiPreconditioner(sp.diags(1.0 / z.diagonal()).tocsr(), (), np.empty(0, np.int64))


def frobenius_residual(near, precond):
    """``||I - Z_near P||_F``."""
    z = sp.csr_matrix(getattr(near, "matrix", near))
    p = getattr(precond, "matrix", precond)
    d = sp.identity(z.shape[0], format="csr") - z @ p
    return float(spla.norm(d, "fro"))
