"""Compiled per-row demixing updates, looping over frequency bins.

Both kernels update their arrays in place and release the GIL, so disjoint
frequency ranges can be processed from several threads.
"""
import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def ip_rows(W, Q, r, ok):
    """Iterative-projection update of row ``r`` in every bin.

    W: (I, L, M) complex, row r holds w_r^H.  Q: (I, M, M) weighted
    covariance of row r.  ``ok[i]`` is cleared when ``W[i] @ Q[i]`` is
    numerically singular; W[i] is then left untouched.
    """
    n_freq, _, M = W.shape
    A = np.empty((M, M), np.complex128)
    Ainv = np.empty((M, M), np.complex128)
    eps = 2.220446049250313e-16 * M
    for i in range(n_freq):
        scale = 0.0
        for a in range(M):
            for b in range(M):
                A[a, b] = 0j
                Ainv[a, b] = 0j
            Ainv[a, a] = 1.0
            for c in range(M):
                wac = W[i, a, c]
                for b in range(M):
                    A[a, b] += wac * Q[i, c, b]
            for b in range(M):
                v = abs(A[a, b])
                if v > scale:
                    scale = v

        # Gauss-Jordan inversion of W Q with partial pivoting
        singular = scale == 0.0
        for k in range(M):
            if singular:
                break
            p = k
            best = A[k, k].real ** 2 + A[k, k].imag ** 2
            for a in range(k + 1, M):
                v = A[a, k].real ** 2 + A[a, k].imag ** 2
                if v > best:
                    best = v
                    p = a
            if np.sqrt(best) <= eps * scale:
                singular = True
                break
            if p != k:
                for b in range(M):
                    t = A[k, b]
                    A[k, b] = A[p, b]
                    A[p, b] = t
                    t = Ainv[k, b]
                    Ainv[k, b] = Ainv[p, b]
                    Ainv[p, b] = t
            piv = 1.0 / A[k, k]
            for b in range(M):
                A[k, b] *= piv
                Ainv[k, b] *= piv
            for a in range(M):
                if a != k:
                    f = A[a, k]
                    if f != 0j:
                        for b in range(M):
                            A[a, b] -= f * A[k, b]
                            Ainv[a, b] -= f * Ainv[k, b]
        if singular:
            ok[i] = False
            continue

        # w = (W Q)^{-1} e_r, then w <- w / sqrt(w^H Q w)
        quad = 0.0
        for a in range(M):
            s = 0j
            for b in range(M):
                s += Q[i, a, b] * Ainv[b, r]
            quad += (Ainv[a, r].conjugate() * s).real
        if not quad > 0.0:
            ok[i] = False
            continue
        norm = 1.0 / np.sqrt(quad)
        for a in range(M):
            W[i, r, a] = (Ainv[a, r] * norm).conjugate()
        ok[i] = True


@numba.njit(cache=True, nogil=True)
def iss_rows(W, Y, Phi, r, z, status):
    """Iterative-source-steering rank-1 update with respect to row ``r``.

    W: (I, L, M); Y: (I, L, J) current outputs ``W x``; Phi: (I, L, J)
    per-row weights 1/lambda (zero on excluded frames).  Writes the steering
    vector into ``z[i]`` and applies ``W <- W - z w_r^H`` and the matching
    update of Y.  ``status[i]`` is -1 on success, otherwise the row ``p``
    whose weighted power of ``y_r`` vanished.
    """
    n_freq, L, M = W.shape
    J = Y.shape[2]
    for i in range(n_freq):
        status[i] = -1
        for p in range(L):
            num = 0j
            den = 0.0
            for j in range(J):
                yr = Y[i, r, j]
                wt = Phi[i, p, j]
                den += (yr.real * yr.real + yr.imag * yr.imag) * wt
                num += Y[i, p, j] * yr.conjugate() * wt
            den /= J
            num /= J
            if not den > 0.0:
                status[i] = p
                break
            if p == r:
                z[i, p] = 1.0 - 1.0 / np.sqrt(den)
            else:
                z[i, p] = num / den
        if status[i] >= 0:
            continue
        # row r last so every other row sees its pre-update value
        for p in range(L):
            if p == r:
                continue
            zp = z[i, p]
            for m in range(M):
                W[i, p, m] -= zp * W[i, r, m]
            for j in range(J):
                Y[i, p, j] -= zp * Y[i, r, j]
        scale = 1.0 - z[i, r]
        for m in range(M):
            W[i, r, m] *= scale
        for j in range(J):
            Y[i, r, j] *= scale
