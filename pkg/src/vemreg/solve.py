"""Conjugate gradients with a Lanczos condition-number estimate.

The CG scalars build the Lanczos tridiagonal
    T(i, i)   = 1/alpha_i + beta_{i-1}/alpha_{i-1}
    T(i, i+1) = sqrt(beta_i)/alpha_i
whose extreme eigenvalues converge to those of the reduced matrix.  On
systems too ill-conditioned for CG to reach the residual tolerance, the
iteration is stopped once it stalls AND the extreme Ritz values have
stabilized; the estimate is reported as unavailable only when the stall
precedes stabilization (the paper-style "n.a." case).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kernels import cg_chunk, tridiag_extreme_eigs_kernel

STALL_WINDOW = 1000
STALL_FACTOR = 1e-2
RITZ_RTOL = 5e-3


@dataclass
class CgReport:
    iterations: int
    relres: float
    converged: bool
    stalled: bool
    diag: np.ndarray
    offdiag: np.ndarray
    lam_min: float
    lam_max: float
    cond: float
    cond_available: bool


def lanczos_tridiag(alphas, betas):
    """Tridiagonal (diag, offdiag) from the CG step/orthogonality scalars."""
    k = len(alphas)
    diag = np.empty(k)
    diag[0] = 1.0 / alphas[0]
    if k > 1:
        diag[1:] = 1.0 / alphas[1:] + betas[:-1] / alphas[:-1]
    off = np.sqrt(np.maximum(betas[:-1], 0.0)) / alphas[:-1] if k > 1 \
        else np.empty(0)
    return diag, off


def tridiag_extreme_eigs(diag, offdiag):
    """Extreme eigenvalues of a symmetric tridiagonal matrix by bisection
    on the Sturm sequence."""
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    if diag.size == 0:
        raise ValueError("empty tridiagonal")
    return tridiag_extreme_eigs_kernel(diag, offdiag)


def cg(matrix, b, tol=1e-12, maxit=None, x0=None, callback=None):
    """Unpreconditioned CG on an SPD CSR matrix.

    Returns (x, CgReport).  Raises if non-positive curvature is met (the
    matrix is not SPD, which signals an assembly bug).
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if maxit is None:
        maxit = 50 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        rep = CgReport(0, 0.0, True, False, np.empty(0), np.empty(0),
                       np.nan, np.nan, np.nan, False)
        return x, rep
    r = b - A @ x
    p = r.copy()
    rr = float(np.dot(r, r))
    alphas_all = []
    betas_all = []
    hist_all = []
    converged = np.sqrt(rr) / bnorm <= tol
    stalled = False
    ritz_stable = False
    prev_ritz = None
    it = 0
    chunk = 250
    while not converged and it < maxit:
        nsteps = min(chunk, maxit - it)
        rr, al, be, hist, k, flag = cg_chunk(
            A.indptr, A.indices, A.data, x, r, p, rr, bnorm, tol, nsteps)
        alphas_all.append(al)
        betas_all.append(be)
        hist_all.append(hist)
        it += k
        if callback is not None:
            callback(it, x)
        if flag == 3:
            raise FloatingPointError(
                "non-positive curvature in CG: matrix is not SPD")
        if flag == 0:
            converged = True
            break
        # stall rule: residual reduction below STALL_FACTOR over the window
        h = np.concatenate(hist_all) if len(hist_all) > 1 else hist_all[0]
        if it >= STALL_WINDOW and \
                h[-1] > STALL_FACTOR * h[-STALL_WINDOW]:
            stalled = True
        if stalled or it + chunk > maxit:
            d, o = lanczos_tridiag(np.concatenate(alphas_all),
                                   np.concatenate(betas_all))
            lo, hi = tridiag_extreme_eigs(d, o)
            if prev_ritz is not None:
                dlo = abs(lo - prev_ritz[0]) / max(abs(lo), 1e-300)
                dhi = abs(hi - prev_ritz[1]) / max(abs(hi), 1e-300)
                ritz_stable = dlo < RITZ_RTOL and dhi < RITZ_RTOL
            prev_ritz = (lo, hi)
            if stalled and ritz_stable:
                break
    alphas = np.concatenate(alphas_all) if alphas_all else np.empty(0)
    betas = np.concatenate(betas_all) if betas_all else np.empty(0)
    hist = np.concatenate(hist_all) if hist_all else np.empty(0)
    relres = float(hist[-1]) if hist.size else 0.0
    if alphas.size:
        diag, off = lanczos_tridiag(alphas, betas)
        lam_min, lam_max = tridiag_extreme_eigs(diag, off)
        cond = lam_max / lam_min if lam_min > 0 else np.inf
        available = converged or (not stalled) or ritz_stable
    else:
        diag = off = np.empty(0)
        lam_min = lam_max = cond = np.nan
        available = False
    return x, CgReport(iterations=it, relres=relres, converged=converged,
                       stalled=stalled, diag=diag, offdiag=off,
                       lam_min=lam_min, lam_max=lam_max, cond=cond,
                       cond_available=available)


def dense_oracle(matrix, max_size=600):
    """Exact condition number by full symmetric eigendecomposition."""
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    if n > max_size:
        raise ValueError(f"dense oracle limited to n <= {max_size}, got {n}")
    w = np.linalg.eigvalsh(A.toarray())
    return float(w[-1] / w[0])
