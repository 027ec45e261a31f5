"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure numpy/scipy implementation; the jitted variant is
selected at import time unless the environment variable ``VEMREG_NO_NUMBA``
is set (any non-empty value) or numba is not importable.  Both lanes produce
the same results up to floating-point rounding; ``benchmarks/bench_kernels.py``
compares them.
"""

import os

import numpy as np

USE_NUMBA = not os.environ.get("VEMREG_NO_NUMBA")
if USE_NUMBA:
    try:
        import numba
    except ImportError:
        USE_NUMBA = False


# ---------------------------------------------------------------------------
# scaled monomial Vandermonde
# ---------------------------------------------------------------------------

def _monomial_vandermonde_np(xs, ys, exps, coeffs):
    """Values of c_k * X^a_k * Y^b_k at scaled points (xs, ys).

    xs, ys : (n,) scaled coordinates (x - x_c)/h_P
    exps   : (m, 2) int exponent pairs; a negative entry yields a zero column
    coeffs : (m,) multiplier per column (derivative falling factorials and
             h powers are folded in by the caller)
    """
    n = xs.shape[0]
    m = exps.shape[0]
    out = np.zeros((n, m))
    for k in range(m):
        a, b = exps[k, 0], exps[k, 1]
        if a < 0 or b < 0 or coeffs[k] == 0.0:
            continue
        out[:, k] = coeffs[k] * xs**a * ys**b
    return out


def _monomial_vandermonde_nb(xs, ys, exps, coeffs):
    n = xs.shape[0]
    m = exps.shape[0]
    out = np.zeros((n, m))
    for k in range(m):
        a = exps[k, 0]
        b = exps[k, 1]
        c = coeffs[k]
        if a < 0 or b < 0 or c == 0.0:
            continue
        for i in range(n):
            v = c
            for _ in range(a):
                v *= xs[i]
            for _ in range(b):
                v *= ys[i]
            out[i, k] = v
    return out


# ---------------------------------------------------------------------------
# Sturm-sequence bisection for symmetric tridiagonal extreme eigenvalues
# ---------------------------------------------------------------------------

def _sturm_count(diag, off, x):
    """Number of eigenvalues of tridiag(off, diag, off) strictly below x."""
    n = diag.shape[0]
    count = 0
    q = diag[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, n):
        if q == 0.0:
            q = 1e-300
        q = diag[i] - x - off[i - 1] * off[i - 1] / q
        if q < 0.0:
            count += 1
    return count


def _tridiag_extreme_eigs_impl(diag, off):
    n = diag.shape[0]
    if n == 1:
        return diag[0], diag[0]
    # Gershgorin bounds
    lo = diag[0]
    hi = diag[0]
    for i in range(n):
        r = 0.0
        if i > 0:
            r += abs(off[i - 1])
        if i < n - 1:
            r += abs(off[i])
        if diag[i] - r < lo:
            lo = diag[i] - r
        if diag[i] + r > hi:
            hi = diag[i] + r
    if hi - lo == 0.0:
        return diag[0], diag[0]
    tol = 1e-14 * max(abs(lo), abs(hi), 1e-300)

    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if _sturm_count(diag, off, mid) >= 1:
            b = mid
        else:
            a = mid
    lam_min = 0.5 * (a + b)

    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if _sturm_count(diag, off, mid) >= n:
            b = mid
        else:
            a = mid
    lam_max = 0.5 * (a + b)
    return lam_min, lam_max


# ---------------------------------------------------------------------------
# CG on CSR arrays, resumable in chunks
# ---------------------------------------------------------------------------

def _csr_matvec_np(indptr, indices, data, x):
    import scipy.sparse as sp

    n = indptr.shape[0] - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n)) @ x


def _csr_matvec_nb(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    y = np.zeros(n)
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        y[i] = s
    return y


def _make_cg_chunk(matvec):
    def cg_chunk(indptr, indices, data, x, r, p, rr, bnorm, tol, nsteps):
        """Run up to ``nsteps`` CG iterations from the given state.

        Mutates x, r, p in place.  Returns (rr, alphas, betas, relres_hist,
        k, flag) with flag 0 = reached tol, 1 = exhausted nsteps,
        3 = non-positive curvature (matrix not SPD).
        """
        alphas = np.zeros(nsteps)
        betas = np.zeros(nsteps)
        hist = np.zeros(nsteps)
        flag = 1
        k = 0
        while k < nsteps:
            ap = matvec(indptr, indices, data, p)
            pap = np.dot(p, ap)
            if pap <= 0.0:
                flag = 3
                break
            alpha = rr / pap
            x += alpha * p
            r -= alpha * ap
            rr_new = np.dot(r, r)
            beta = rr_new / rr
            alphas[k] = alpha
            betas[k] = beta
            hist[k] = np.sqrt(rr_new) / bnorm
            rr = rr_new
            k += 1
            if hist[k - 1] <= tol:
                flag = 0
                break
            p *= beta
            p += r
        return rr, alphas[:k], betas[:k], hist[:k], k, flag

    return cg_chunk


if USE_NUMBA:
    monomial_vandermonde = numba.njit(cache=True)(_monomial_vandermonde_nb)
    _sturm_count = numba.njit(cache=True)(_sturm_count)
    tridiag_extreme_eigs_kernel = numba.njit(cache=True)(_tridiag_extreme_eigs_impl)
    csr_matvec = numba.njit(cache=True)(_csr_matvec_nb)
    cg_chunk = numba.njit(cache=True)(_make_cg_chunk(csr_matvec))
else:
    monomial_vandermonde = _monomial_vandermonde_np
    tridiag_extreme_eigs_kernel = _tridiag_extreme_eigs_impl
    csr_matvec = _csr_matvec_np
    cg_chunk = _make_cg_chunk(csr_matvec)
