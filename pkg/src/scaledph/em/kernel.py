"""Vectorised E-step kernels for one phase-type marginal.

For arguments ``x = theta * z`` the E-step needs ``pi exp(xT)``,
``exp(xT) t`` (or ``exp(xT) e`` for censored rows) and the convolution
``K(x) = int_0^x exp((x-u)T) t pi exp(uT) du``, summed over observations
and quadrature nodes with posterior weights.

With ``T = V diag(d) V^{-1}`` the sum of ``c * K(x)`` is
``V (C o G) V^{-1}`` where ``C = V^{-1} t pi V`` and
``G_ab = sum c (e^{x d_a} - e^{x d_b}) / (d_a - d_b)``, so only vectors of
exponentials are needed. Everything is scaled by ``exp(-x r)`` with ``r``
the largest real part of the spectrum to keep the terms representable.
When ``V`` is badly conditioned the kernel falls back to batched
Van Loan block exponentials.
"""

import numpy as np

from ..matfun import expm_batch

_TINY = 1e-300
_COND_MAX = 1e7
_PAIR_TOL = 1e-3


def _phi1(z):
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2, np.expm1(zs) / zs)


class PhaseKernel:
    def __init__(self, phase, chunk=200_000):
        self.phase = phase
        self.p = phase.dim
        self.chunk = chunk
        T = phase.T
        d, V = np.linalg.eig(T)
        self.r = float(np.max(d.real))
        cond = np.linalg.cond(V)
        self.eig = bool(np.isfinite(cond) and cond < _COND_MAX)
        e = np.ones(self.p)
        if self.eig:
            if np.all(d.imag == 0):
                d, V = d.real, V.real
            Vi = np.linalg.inv(V)
            self.d, self.V, self.Vi = d, V, Vi
            self.piV = phase.pi @ V
            self.vt = Vi @ phase.t
            self.ve = Vi @ e
            self.g_coef = self.piV * self.vt
            self.s_coef = self.piV * self.ve
            self.C_t = np.outer(self.vt, self.piV)
            self.C_e = np.outer(self.ve, self.piV)
        else:
            shifted = T - self.r * np.eye(self.p)
            self.Ts = shifted
            self.block_t = self._block(shifted, phase.t, phase.pi)
            self.block_e = self._block(shifted, e, phase.pi)

    @staticmethod
    def _block(Ts, right, pi):
        p = Ts.shape[0]
        A = np.zeros((2 * p, 2 * p))
        A[:p, :p] = Ts
        A[p:, p:] = Ts
        A[:p, p:] = np.outer(right, pi)
        return A

    def _exps(self, x):
        return np.exp(np.multiply.outer(x, self.d - self.r))

    # -- log densities ---------------------------------------------------------
    def log_terms(self, x, censored):
        """``log(pi exp(xT) t)`` for exact rows and ``log(pi exp(xT) e)`` for censored rows.

        ``x`` has shape ``(n, J)``; ``censored`` has shape ``(n,)``.
        """
        x = np.asarray(x, dtype=float)
        cen = np.asarray(censored, dtype=bool)
        if not cen.any():
            return self._log_terms(x, False)
        out = np.empty_like(x)
        for rows, cens in ((~cen, False), (cen, True)):
            if not rows.any():
                continue
            xs = x[rows]
            out[rows] = self._log_terms(xs, cens)
        return out

    def _log_terms(self, x, cens):
        flat = x.reshape(-1)
        val = np.empty(flat.size)
        for i in range(0, flat.size, self.chunk):
            xs = flat[i:i + self.chunk]
            if self.eig:
                coef = self.s_coef if cens else self.g_coef
                v = (self._exps(xs) @ coef).real
            else:
                E = expm_batch(xs[:, None, None] * self.Ts[None])
                right = np.ones(self.p) if cens else self.phase.t
                v = np.einsum("a,nab,b->n", self.phase.pi, E, right)
            val[i:i + self.chunk] = v
        np.maximum(val, _TINY, out=val)
        np.log(val, out=val)
        if self.r != 0:
            val += flat * self.r
        return val.reshape(x.shape)

    # -- sufficient statistics -------------------------------------------------
    def stats(self, x, logc, censored):
        """Accumulate ``(B, Z, N, Nexit)`` with weights ``c = exp(logc)``.

        ``logc`` already includes ``-log(pi exp(xT) t)`` (or ``... e``), so the
        weights multiply unnormalised path quantities.
        """
        p = self.p
        B = np.zeros(p)
        Z = np.zeros(p)
        N = np.zeros((p, p))
        Nexit = np.zeros(p)
        cen = np.asarray(censored, dtype=bool)
        for rows, cens in ((~cen, False), (cen, True)):
            if not rows.any():
                continue
            if rows.all():
                b, z, n, ne = self._stats(x.reshape(-1), logc.reshape(-1), cens)
            else:
                b, z, n, ne = self._stats(x[rows].reshape(-1), logc[rows].reshape(-1), cens)
            B += b
            Z += z
            N += n
            Nexit += ne
        return B, Z, N, Nexit

    def _stats(self, x, logc, cens):
        p = self.p
        pi, t = self.phase.pi, self.phase.t
        offdiag = self.phase.T - np.diag(np.diagonal(self.phase.T))
        keep = logc > -700
        x, logc = x[keep], logc[keep]
        c = np.exp(logc + x * self.r)
        if self.eig:
            d = self.d
            sumE = np.zeros(p, d.dtype)
            G = np.zeros((p, p), d.dtype)
            diff = d[:, None] - d[None, :]
            scale = float(np.mean(x)) if x.size else 1.0
            close = (np.abs(diff) * max(scale, 1e-300) < _PAIR_TOL)
            np.fill_diagonal(close, False)
            close_pairs = np.argwhere(np.triu(close))
            for i in range(0, x.size, self.chunk):
                xs, cs = x[i:i + self.chunk], c[i:i + self.chunk]
                E = self._exps(xs)
                cE = cs[:, None] * E
                sumE += cE.sum(axis=0)
                G[np.diag_indices(p)] += (cE * xs[:, None]).sum(axis=0)
                for a, b in close_pairs:
                    val = np.sum(cs * xs * E[:, a] * _phi1(xs * (d[b] - d[a])))
                    G[a, b] += val
                    G[b, a] += val
            far = ~close
            np.fill_diagonal(far, False)
            with np.errstate(divide="ignore", invalid="ignore"):
                Gfar = (sumE[:, None] - sumE[None, :]) / diff
            G[far] = Gfar[far]
            C = self.C_e if cens else self.C_t
            K = (self.V @ (C * G) @ self.Vi).real
            right = self.ve if cens else self.vt
            bvec = (self.V @ (sumE * right)).real
            avec = ((sumE * self.piV) @ self.Vi).real
        else:
            K = np.zeros((p, p))
            bvec = np.zeros(p)
            avec = np.zeros(p)
            block = self.block_e if cens else self.block_t
            for i in range(0, x.size, max(self.chunk // 8, 1)):
                xs, cs = x[i:i + self.chunk // 8], c[i:i + self.chunk // 8]
                F = expm_batch(xs[:, None, None] * block[None])
                E = F[:, :p, :p]
                K += np.einsum("n,nab->ab", cs, F[:, :p, p:])
                right = np.ones(p) if cens else t
                bvec += np.einsum("n,nab,b->a", cs, E, right)
                avec += np.einsum("n,a,nab->b", cs, pi, E)
        B = pi * bvec
        Z = np.diagonal(K).copy()
        N = offdiag * K.T
        Nexit = np.zeros(p) if cens else t * avec
        return B, np.maximum(Z, 0.0), np.maximum(N, 0.0), np.maximum(Nexit, 0.0)
