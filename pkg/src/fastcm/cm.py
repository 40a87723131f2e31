"""Characteristic modes: spectral transformations, restarted Arnoldi and a
dense reference.

Modes solve ``X J = lambda R J``. Two transformed standard problems are
supported::

    sep1:  Z^{-1} R J = mu J,   mu = 1 / (1 + i lambda)
    sep :  X^{-1} R J = mu J,   mu = 1 / lambda

Both map the small-|lambda| (near resonance) modes to the largest |mu|, which
is what the Arnoldi iteration converges to first.

Mode vectors are normalized with the Hermitian form ``J^H R J = 1`` and the
phase fixed so the largest-magnitude coefficient is real positive. For real
modes (the exact eigenvectors of the real symmetric pencil) this equals
``J^T R J = 1``.
"""

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from fastcm.krylov import SOLVERS

SPECTRAL_MODES = ("sep1", "sep")
DEGENERACY_TOL = 0.01


class InnerSolveError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class NormalizationWarning(UserWarning):
    pass


def _apply(op, u):
    if callable(op):
        return op(u)
    if hasattr(op, "matvec"):
        return op.matvec(u)
    return op @ u


class SpectralOperator:
    """``u -> B^{-1} R u`` with ``B = Z`` (sep1) or ``B = X`` (sep).

    Parameters
    ----------
    r_op, b_op : operator handles or matrices for R and for Z or X.
    mode : {"sep1", "sep"}
    solver : {"gmres", "bicgstab"}
    tol, restart, maxit : inner solver settings.
    precond : right preconditioner for the inner solve; sep1 only.
    """

    def __init__(self, r_op, b_op, mode="sep1", solver="gmres", tol=1e-3, restart=60, maxit=1000, precond=None):
        if mode not in SPECTRAL_MODES:
            raise ValueError(f"unknown spectral mode {mode!r}; expected one of {SPECTRAL_MODES}")
        if solver not in SOLVERS:
            raise ValueError(f"unknown inner solver {solver!r}")
        if mode == "sep" and precond is not None:
            raise ValueError("the sep transformation runs unpreconditioned")
        self.r_op = r_op
        self.b_op = b_op
        self.mode = mode
        self.solver = solver
        self.tol = tol
        self.restart = restart
        self.maxit = maxit
        self.precond = precond
        self.n = r_op.shape[0]
        self.reports = []
        self.last_report = None

    @property
    def inner_iterations(self):
        return sum(r.iterations for r in self.reports)

    def apply(self, u):
        u = np.asarray(u, dtype=complex)
        if not np.linalg.norm(u) > 0:
            raise ValueError("cannot apply the spectral operator to a zero vector")
        rhs = _apply(self.r_op, u)
        if not np.linalg.norm(rhs) > 0:
            return np.zeros_like(rhs)
        kwargs = {"tol": self.tol, "maxit": self.maxit, "precond": self.precond}
        if self.solver == "gmres":
            kwargs["restart"] = self.restart
        x, rep = SOLVERS[self.solver](self.b_op, rhs, **kwargs)
        self.reports.append(rep)
        self.last_report = rep
        if not rep.converged:
            raise InnerSolveError(
                f"inner {self.solver} stopped at relative residual {rep.residual:.3e} "
                f"after {rep.iterations} iterations (tol {self.tol:g})",
                rep,
            )
        return x

    __call__ = apply


def apply_operator(op, u):
    """One application of the spectral operator; the inner report is ``op.last_report``."""
    return op.apply(u)


def extract_lambda(mu, mode="sep1"):
    """Characteristic value and realness diagnostic from a Ritz value."""
    if mu == 0:
        raise ValueError("Ritz value is zero")
    inv = 1.0 / complex(mu)
    if mode == "sep1":
        return inv.imag, abs(inv.real - 1.0)
    if mode == "sep":
        return inv.real, abs(inv.imag)
    raise ValueError(f"unknown spectral mode {mode!r}")


# ----------------------------------------------------------------------
# solution containers


@dataclass
class CharacteristicMode:
    lam: float
    J: np.ndarray = field(repr=False)
    mu: complex = complex("nan")
    residual: float = float("nan")
    realness: float = float("nan")
    normalized: bool = True


@dataclass
class CmSolution:
    modes: list
    frequency: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def lambdas(self):
        return np.array([m.lam for m in self.modes])

    @property
    def vectors(self):
        return np.stack([m.J for m in self.modes], axis=1) if self.modes else np.empty((0, 0))

    def __len__(self):
        return len(self.modes)

    def groups(self, rtol=DEGENERACY_TOL):
        return degenerate_groups(self.lambdas, rtol)


def degenerate_groups(lams, rtol=DEGENERACY_TOL):
    """Index groups of values within ``rtol`` of a neighbor, by chaining."""
    lams = np.asarray(lams, dtype=float)
    order = np.argsort(lams)
    groups, cur = [], []
    for idx in order:
        if cur and abs(lams[idx] - lams[cur[-1]]) > rtol * max(abs(lams[idx]), abs(lams[cur[-1]])):
            groups.append(cur)
            cur = []
        cur.append(int(idx))
    if cur:
        groups.append(cur)
    return groups


# ----------------------------------------------------------------------
# normalization and post-processing


def normalize_mode(J, R_apply):
    """Scale ``J`` so that ``J^H R J = 1`` with its largest entry real positive.

    Returns ``(J, ok)``; ``ok`` is False when ``|J^H R J| < 1e-12 ||J||^2``,
    in which case ``J`` is returned with only its phase fixed.
    """
    J = np.asarray(J, dtype=complex)
    big = J[np.argmax(np.abs(J))]
    if big != 0:
        J = J * (abs(big) / big)
    c = np.vdot(J, _apply(R_apply, J)).real
    if abs(c) < 1e-12 * np.vdot(J, J).real or c < 0:
        warnings.warn("mode has (near) zero radiated power; left unnormalized", NormalizationWarning, stacklevel=2)
        return J, False
    return J / math.sqrt(c), True


def _real_rayleigh_ritz(V, r_apply, x_apply):
    """Real eigenvectors of the pencil (X, R) restricted to the real span of V.

    The best real ``g``-dimensional subspace of ``[Re V, Im V]`` is taken by
    SVD, then the projected symmetric pencil is solved.
    """
    g = V.shape[1]
    u, _, _ = np.linalg.svd(np.hstack([V.real, V.imag]), full_matrices=False)
    W = u[:, :g]
    RW = np.stack([np.real(_apply(r_apply, W[:, i])) for i in range(g)], axis=1)
    XW = np.stack([np.real(_apply(x_apply, W[:, i])) for i in range(g)], axis=1)
    rp = W.T @ RW
    xp = W.T @ XW
    rp = 0.5 * (rp + rp.T)
    xp = 0.5 * (xp + xp.T)
    try:
        lam, y = sla.eigh(xp, rp)
    except np.linalg.LinAlgError:
        return None, None
    return lam, W @ y


def _x_from(op):
    """Callable applying X to real vectors for the spectral operator's pencil."""
    if op.mode == "sep":
        return lambda w: _apply(op.b_op, w)
    return lambda w: np.imag(_apply(op.b_op, w))


# ----------------------------------------------------------------------
# implicitly restarted Arnoldi


def _orthogonalize(V, j, w):
    """Classical Gram-Schmidt against V[:, :j+1] with one DGKS correction."""
    basis = V[:, : j + 1]
    h = basis.conj().T @ w
    w = w - basis @ h
    norm0 = np.linalg.norm(h)
    norm1 = np.linalg.norm(w)
    if norm1 < 0.717 * math.hypot(norm0, norm1):
        c = basis.conj().T @ w
        w = w - basis @ c
        h = h + c
    return h, w


def _arnoldi(apply, V, H, start, stop, rng):
    n = V.shape[0]
    for j in range(start, stop):
        w = apply(V[:, j])
        h, w = _orthogonalize(V, j, w)
        H[: j + 1, j] = h
        beta = np.linalg.norm(w)
        if beta <= 1e-14 * max(np.linalg.norm(h), 1e-300):
            # invariant subspace: continue from a fresh orthogonal direction
            w = rng.standard_normal(n) + 0j
            _, w = _orthogonalize(V, j, w)
            _, w = _orthogonalize(V, j, w)
            V[:, j + 1] = w / np.linalg.norm(w)
            H[j + 1, j] = 0.0
        else:
            V[:, j + 1] = w / beta
            H[j + 1, j] = beta


def ira_eigs(op, nev, ncv, outer_tol=1e-8, maxouter=300, seed=1, v0=None, refine=True):
    """Largest-|mu| eigenpairs of a spectral operator by implicitly restarted Arnoldi.

    Exact shifts (the unwanted Ritz values) are applied by implicit QR on
    the Hessenberg matrix. A Ritz pair is converged when its Arnoldi
    residual estimate ``|beta_m e_m^T s| <= outer_tol |mu|``.

    With ``refine``, the vectors are replaced by real eigenvectors of the
    pencil projected on the real span of all Ritz vectors, which makes them
    mutually R-orthogonal, degenerate groups included.

    Returns a ``CmSolution`` sorted by ``|lambda|`` ascending. On
    non-convergence the converged subset plus the best remaining Ritz pairs
    are returned with ``metadata["converged"] = False``.
    """
    n = op.n
    if not 1 <= nev < ncv <= n:
        raise ValueError(f"need 1 <= nev < ncv <= N, got nev={nev}, ncv={ncv}, N={n}")
    if ncv < 2 * nev + 1:
        warnings.warn(f"ncv={ncv} is small for nev={nev}; convergence may be slow", stacklevel=2)
    rng = np.random.default_rng(seed)
    start = rng.standard_normal(n) + 0j if v0 is None else np.asarray(v0, dtype=complex)
    V = np.zeros((n, ncv + 1), dtype=complex)
    H = np.zeros((ncv + 1, ncv), dtype=complex)
    V[:, 0] = start / np.linalg.norm(start)
    t0 = time.perf_counter()
    m = ncv
    k = 0
    outer = 0
    applies = 0
    while True:
        _arnoldi(op.apply, V, H, k, m, rng)
        applies += m - k
        outer += 1
        theta, S = np.linalg.eig(H[:m, :m])
        order = np.argsort(-np.abs(theta), kind="stable")
        theta, S = theta[order], S[:, order]
        beta = abs(H[m, m - 1])
        est = beta * np.abs(S[m - 1, :])
        conv = est <= outer_tol * np.abs(theta)
        nconv = int(conv[:nev].sum())
        if nconv >= nev or outer >= maxouter:
            break
        kk = nev + min(nconv, (m - nev) // 2)
        shifts = theta[kk:]
        Hm = H[:m, :m].copy()
        Q = np.eye(m, dtype=complex)
        for s in shifts:
            q, _ = np.linalg.qr(Hm - s * np.eye(m))
            Hm = q.conj().T @ Hm @ q
            Q = Q @ q
        Hm = np.triu(Hm, -1)
        f = (V[:, :m] @ Q[:, kk]) * Hm[kk, kk - 1] + V[:, m] * H[m, m - 1] * Q[m - 1, kk - 1]
        V[:, :kk] = V[:, :m] @ Q[:, :kk]
        H[:] = 0
        H[:kk, :kk] = Hm[:kk, :kk]
        bnorm = np.linalg.norm(f)
        V[:, kk] = f / bnorm
        H[kk, kk - 1] = bnorm
        k = kk

    vecs = V[:, :m] @ S[:, :nev]
    mus = theta[:nev]
    lams = []
    modes = []
    for i in range(nev):
        lam, real = extract_lambda(mus[i], op.mode)
        lams.append(lam)
        modes.append(CharacteristicMode(lam, vecs[:, i], complex(mus[i]), float(est[i] / abs(mus[i])), real))
    if refine:
        _, W = _real_rayleigh_ritz(vecs, op.r_op, _x_from(op))
        if W is not None:
            # pair projected eigenvectors with Ritz vectors by R-correlation
            RW = np.stack([_apply(op.r_op, W[:, i] + 0j) for i in range(nev)], axis=1)
            corr = np.abs(vecs.conj().T @ RW)
            corr /= np.sqrt(np.abs(np.einsum("ij,ij->j", vecs.conj(), np.stack(
                [_apply(op.r_op, vecs[:, i]) for i in range(nev)], axis=1))))[:, None] + 1e-300
            rows, cols = linear_sum_assignment(-corr)
            for idx, col in zip(rows, cols):
                modes[idx].J = W[:, col]
    for mode in modes:
        mode.J, mode.normalized = normalize_mode(mode.J, op.r_op)
    order = np.argsort([abs(md.lam) for md in modes], kind="stable")
    modes = [modes[i] for i in order]
    meta = {
        "method": "ira",
        "spectral_mode": op.mode,
        "nev": nev,
        "ncv": ncv,
        "outer_iterations": outer,
        "operator_applies": applies,
        "inner_iterations": op.inner_iterations,
        "inner_tol": op.tol,
        "outer_tol": outer_tol,
        "converged": bool(nconv >= nev),
        "n_converged": nconv,
        "seconds": time.perf_counter() - t0,
    }
    if not meta["converged"]:
        warnings.warn(f"IRA stopped after {outer} outer iterations with {nconv}/{nev} converged", stacklevel=2)
    return CmSolution(modes, metadata=meta)


# ----------------------------------------------------------------------
# dense reference


def dense_reference(Z, nev=None, cap=5000):
    """Eigenpairs of ``X J = lambda R J`` by dense QZ, smallest ``|lambda|`` first."""
    Z = np.asarray(Z)
    n = Z.shape[0]
    if n > cap:
        raise ValueError(f"dense eigensolve of N={n} exceeds the cap of {cap}")
    R, X = Z.real, Z.imag
    t0 = time.perf_counter()
    w, vr = sla.eig(X, R, homogeneous_eigvals=True)
    alpha, beta = w
    finite = np.abs(beta) > 1e-12 * np.abs(alpha)
    lam = np.full(alpha.shape, np.inf + 0j)
    lam[finite] = alpha[finite] / beta[finite]
    ok = finite & (np.abs(lam.imag) <= 1e-6 * np.maximum(1.0, np.abs(lam.real)))
    idx = np.flatnonzero(ok)
    idx = idx[np.argsort(np.abs(lam[idx].real), kind="stable")]
    if nev is not None:
        idx = idx[:nev]
    modes = []
    for i in idx:
        J, okn = normalize_mode(vr[:, i], R)
        li = float(lam[i].real)
        modes.append(CharacteristicMode(li, J, 1.0 / (1.0 + 1j * li), 0.0, float(abs(lam[i].imag)), okn))
    meta = {"method": "qz", "nev": len(modes), "seconds": time.perf_counter() - t0}
    return CmSolution(modes, metadata=meta)


# ----------------------------------------------------------------------
# comparison and tracking


def r_correlation(Ja, Jb, R_apply):
    """``|Ja^H R Jb| / sqrt(Ja^H R Ja * Jb^H R Jb)``, in [0, 1] for PSD R."""
    rb = _apply(R_apply, Jb)
    ra = _apply(R_apply, Ja)
    num = abs(np.vdot(Ja, rb))
    den = math.sqrt(abs(np.vdot(Ja, ra).real) * abs(np.vdot(Jb, rb).real))
    return num / den if den > 0 else 0.0


def track_modes(prev, nxt, R_apply):
    """Match modes of ``nxt`` to ``prev`` by R-weighted correlation.

    Returns ``(perm, confidence)``: ``nxt.modes[perm[a]]`` continues
    ``prev.modes[a]``. Assignment is greedy on the largest remaining
    correlation, so a contested mode goes to its strongest partner.
    Confidence is the smallest matched correlation.
    """
    a, b = len(prev), len(nxt)
    C = np.zeros((a, b))
    for i, mp in enumerate(prev.modes):
        for j, mn in enumerate(nxt.modes):
            C[i, j] = r_correlation(mp.J, mn.J, R_apply)
    perm = np.full(a, -1)
    work = C.copy()
    matched = []
    for _ in range(min(a, b)):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        perm[i] = j
        matched.append(C[i, j])
        work[i, :] = -1
        work[:, j] = -1
    confidence = float(min(matched)) if matched else 0.0
    return perm, confidence


def magnitude_discrepancy(Ja, Jb):
    """RMS discrepancy of coefficient magnitudes, relative to ``|Jb|``."""
    ma, mb = np.abs(Ja), np.abs(Jb)
    return float(np.linalg.norm(ma - mb) / np.linalg.norm(mb))


def subspace_angles_deg(A, B, R=None):
    """Principal angles (degrees) between column spans, optionally R-weighted."""
    if R is not None:
        # symmetric square root; R is only semidefinite in general
        w, q = np.linalg.eigh(0.5 * (R + R.T))
        half = (q * np.sqrt(np.clip(w, 0, None))) @ q.T
        A, B = half @ A, half @ B
    return np.degrees(sla.subspace_angles(A, B))


# ----------------------------------------------------------------------
# writers

EIGEN_CSV_HEADER = [
    "frequency_hz",
    "mode",
    "lambda",
    "abs_mu",
    "realness",
    "residual",
    "outer_iterations",
    "inner_iterations",
]


def eigen_rows(solution):
    meta = solution.metadata
    return [
        [
            repr(float(solution.frequency)),
            i + 1,
            repr(float(m.lam)),
            repr(float(abs(m.mu))),
            repr(float(m.realness)),
            repr(float(m.residual)),
            meta.get("outer_iterations", 0),
            meta.get("inner_iterations", 0),
        ]
        for i, m in enumerate(solution.modes)
    ]


def write_eigen_csv(path, solutions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EIGEN_CSV_HEADER)
        for sol in solutions:
            w.writerows(eigen_rows(sol))


def write_modes_json(path, solution):
    """Mode vectors as ``{edge index: [re, im]}`` per mode."""
    doc = {
        "frequency_hz": solution.frequency,
        "modes": [
            {
                "index": i + 1,
                "lambda": m.lam,
                "normalized": m.normalized,
                "coefficients": {str(e): [float(c.real), float(c.imag)] for e, c in enumerate(m.J)},
            }
            for i, m in enumerate(solution.modes)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def triangle_current_magnitude(basis, J):
    """|J| at each triangle centroid."""
    mesh = basis.mesh
    v = mesh.vertices[mesh.triangles]  # (F, 3, 3)
    c = v.mean(axis=1)
    tb = basis.tri_basis
    coef = np.where(tb >= 0, J[np.maximum(tb, 0)], 0) * basis.tri_sign
    length = np.where(tb >= 0, basis.lengths[np.maximum(tb, 0)], 0.0)
    scale = coef * length / (2 * mesh.areas[:, None])  # (F, 3)
    vec = np.einsum("fe,fed->fd", scale, c[:, None, :] - v)
    return np.sqrt(np.sum(np.abs(vec) ** 2, axis=1))


def write_vtk(path, basis, solution):
    """Legacy ASCII VTK surface with per-triangle |J| for each mode."""
    mesh = basis.mesh
    lines = ["# vtk DataFile Version 3.0", "characteristic mode currents", "ASCII", "DATASET POLYDATA"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]
    lines.append(f"POLYGONS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_DATA {mesh.n_triangles}")
    for i, m in enumerate(solution.modes):
        lines.append(f"SCALARS J{i + 1}_magnitude double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [repr(float(x)) for x in triangle_current_magnitude(basis, m.J)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
