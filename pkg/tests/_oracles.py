"""Brute-force loop implementations used as test oracles.

Everything here is written index by index, without vectorisation and
without reusing package code, so that agreement with the package is
meaningful.  Delays reaching before frame 0 clamp to frame 0.
"""
import math

import numpy as np


def clamp(j, l):
    return j - l if j - l >= 0 else 0


def layout(taps):
    rows = []
    for n, t in enumerate(taps):
        for l in range(t):
            rows.append((n, l))
    return rows


def psd_loop(B, V):
    I, K = B.shape
    J = V.shape[1]
    lam = np.zeros((I, J))
    for i in range(I):
        for j in range(J):
            s = 0.0
            for k in range(K):
                s += B[i, k] * V[k, j]
            lam[i, j] = s
    return lam


def demix_loop(W, x):
    I, J, M = x.shape
    L = W.shape[1]
    y = np.zeros((I, J, L), dtype=complex)
    for i in range(I):
        for j in range(J):
            for r in range(L):
                s = 0j
                for m in range(M):
                    s += W[i, r, m] * x[i, j, m]
                y[i, j, r] = s
    return y


def objective_loop(W, Bs, Vs, x, taps):
    I, J, M = x.shape
    lams = [psd_loop(B, V) for B, V in zip(Bs, Vs)]
    y = demix_loop(W, x)
    total = 0.0
    for r, (n, l) in enumerate(layout(taps)):
        for i in range(I):
            for j in range(J):
                lam = lams[n][i, clamp(j, l)]
                total += math.log(lam) + abs(y[i, j, r]) ** 2 / lam
    for i in range(I):
        total -= 2 * J * math.log(abs(det_loop(W[i])))
    return total


def det_loop(A):
    """Determinant by cofactor-free Gaussian elimination with pivoting."""
    A = [list(row) for row in A]
    n = len(A)
    det = 1 + 0j
    for k in range(n):
        p = max(range(k, n), key=lambda a: abs(A[a][k]))
        if A[p][k] == 0:
            return 0j
        if p != k:
            A[k], A[p] = A[p], A[k]
            det = -det
        det *= A[k][k]
        for a in range(k + 1, n):
            f = A[a][k] / A[k][k]
            for b in range(k, n):
                A[a][b] -= f * A[k][b]
    return det


def covariance_loop(x, lam, l):
    """(1/J) sum_j x_j x_j^H / lam[j - l] for a single bin."""
    J, M = x.shape
    Q = np.zeros((M, M), dtype=complex)
    for j in range(J):
        w = 1.0 / lam[clamp(j, l)]
        for a in range(M):
            for b in range(M):
                Q[a, b] += x[j, a] * x[j, b].conjugate() * w
    return Q / J


def mu_bases_loop(B, V, y_src):
    """MU of B_n; y_src has shape (I, J, L_n)."""
    I, K = B.shape
    J = V.shape[1]
    lam = psd_loop(B, V)
    out = np.zeros_like(B)
    for i in range(I):
        for k in range(K):
            num = 0.0
            den = 0.0
            for l in range(y_src.shape[2]):
                for j in range(J):
                    jj = clamp(j, l)
                    num += abs(y_src[i, j, l]) ** 2 * V[k, jj] / lam[i, jj] ** 2
                    den += V[k, jj] / lam[i, jj]
            out[i, k] = B[i, k] * math.sqrt(num / den)
    return out


def mu_activations_loop(B, V, y_src):
    I, K = B.shape
    J = V.shape[1]
    lam = psd_loop(B, V)
    out = np.zeros_like(V)
    for k in range(K):
        for jp in range(J):
            num = 0.0
            den = 0.0
            for l in range(y_src.shape[2]):
                for j in range(J):
                    if clamp(j, l) != jp:
                        continue
                    for i in range(I):
                        num += B[i, k] * abs(y_src[i, j, l]) ** 2 / lam[i, jp] ** 2
                        den += B[i, k] / lam[i, jp]
            out[k, jp] = V[k, jp] * math.sqrt(num / den)
    return out


def ctf_mixture_loop(sources, H, taps):
    """x[i, j, m] = sum_n sum_l H[i, m, (n, l)] s[n, i, j - l], silent before 0."""
    N, I, J = sources.shape
    M = H.shape[1]
    x = np.zeros((I, J, M), dtype=complex)
    for i in range(I):
        for j in range(J):
            for m in range(M):
                s = 0j
                for r, (n, l) in enumerate(layout(taps)):
                    if j - l >= 0:
                        s += H[i, m, r] * sources[n, i, j - l]
                x[i, j, m] = s
    return x


def convolve_loop(s, h):
    out = [0.0] * (len(s) + len(h) - 1)
    for a, sa in enumerate(s):
        for b, hb in enumerate(h):
            out[a + b] += sa * hb
    return np.array(out)


def ilrma_iss_sweep(W, X, P):
    """Standard ISS sweep for a determined mixture (one tap per source).

    W: (F, N, N) with rows w_n^H; X: (F, T, N) mixture; P: (F, T, N) source
    variances.  Steering coefficients for source k:
    v_n = sum_t y_n conj(y_k) / p_n / sum_t |y_k|^2 / p_n (n != k) and
    v_k = 1 - (mean_t |y_k|^2 / p_k)^(-1/2).
    """
    W = np.array(W, dtype=complex)
    F, N, _ = W.shape
    T = X.shape[1]
    for f in range(F):
        Y = [[sum(W[f, n, m] * X[f, t, m] for m in range(N)) for t in range(T)] for n in range(N)]
        for k in range(N):
            v = [0j] * N
            for n in range(N):
                num = 0j
                den = 0.0
                for t in range(T):
                    num += Y[n][t] * Y[k][t].conjugate() / P[f, t, n]
                    den += abs(Y[k][t]) ** 2 / P[f, t, n]
                if n == k:
                    v[n] = 1 - 1 / math.sqrt(den / T)
                else:
                    v[n] = num / den
            yk = list(Y[k])
            wk = W[f, k].copy()
            for n in range(N):
                for t in range(T):
                    Y[n][t] -= v[n] * yk[t]
                W[f, n] -= v[n] * wk
    return W


def iss_cost(W, Q_list, r, p, z):
    """Auxiliary cost of coordinate ``p`` of the rank-1 update W - z w_r^H.

    For p != r: (w_p - conj(z) w_r)^H Q_p (w_p - conj(z) w_r).
    For p == r: |1 - z|^2 w_r^H Q_r w_r - log|1 - z|^2.
    ``z`` may be an array of candidates.
    """
    z = np.asarray(z, dtype=complex)
    w_r = W[r].conj()
    if p != r:
        w_p = W[p].conj()
        a = np.real(w_p.conj() @ Q_list[p] @ w_p)
        b = w_p.conj() @ Q_list[p] @ w_r
        c = np.real(w_r.conj() @ Q_list[p] @ w_r)
        # expand the quadratic in z
        return a - 2 * np.real(np.conj(z) * b) + np.abs(z) ** 2 * c
    d = np.real(w_r.conj() @ Q_list[r] @ w_r)
    g = np.abs(1 - z) ** 2
    with np.errstate(divide="ignore"):
        return g * d - np.log(g)


def iss_cost_direct(W, Q_list, r, p, z):
    """Same cost evaluated from the updated row, for a single z."""
    w_new = W[p].conj() - np.conj(z) * W[r].conj()
    if p != r:
        return float(np.real(w_new.conj() @ Q_list[p] @ w_new))
    return float(np.real(w_new.conj() @ Q_list[r] @ w_new) - math.log(abs(1 - z) ** 2))
