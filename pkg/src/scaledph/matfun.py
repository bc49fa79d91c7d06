"""Dense matrix-function kernels.

Matrix exponentials use scaling and squaring with the degree-13 diagonal
Padé approximant (Higham 2005). The exponential works on stacks of matrices
so that the EM E-step can evaluate thousands of small exponentials at once.
Logarithms come from :func:`scipy.linalg.logm` (complex Schur form plus
inverse scaling and squaring); fractional powers are built from the two.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionError, SingularityError

# Padé-13 coefficients b_0..b_13.
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152

_IMAG_TOL = 1e-10


def _as_square(M, name="M"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def _pade13_batch(A):
    n = A.shape[-1]
    b = _PADE13
    ident = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return np.linalg.solve(V - U, V + U)


def expm_batch(A):
    """Matrix exponential of every matrix in a stack of shape ``(..., n, n)``.

    Each matrix gets its own scaling exponent from its 1-norm; the squaring
    phase only touches matrices that still need squaring.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expected a stack of square matrices, got shape {A.shape}")
    if not np.issubdtype(A.dtype, np.inexact):
        A = A.astype(float)
    lead = A.shape[:-2]
    n = A.shape[-1]
    if A.size == 0:
        return np.empty_like(A)
    if n == 1:
        return np.exp(A)
    flat = A.reshape(-1, n, n)
    norms = np.abs(flat).sum(axis=1).max(axis=1)
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0.0)
    s = np.nan_to_num(s, nan=0.0, posinf=0.0).astype(int)
    scaled = flat / (2.0 ** s)[:, None, None]
    F = _pade13_batch(scaled)
    F[norms == 0] = np.eye(n)
    for k in range(int(s.max(initial=0))):
        idx = np.nonzero(s > k)[0]
        F[idx] = F[idx] @ F[idx]
    return F.reshape(lead + (n, n))


def expm(M):
    """Matrix exponential of a single square matrix."""
    M = _as_square(M)
    return expm_batch(M[None])[0]


def _real_if_close(X, reference):
    if np.iscomplexobj(X) and not np.iscomplexobj(reference):
        scale = max(1.0, float(np.max(np.abs(X), initial=0.0)))
        if np.max(np.abs(X.imag), initial=0.0) <= _IMAG_TOL * scale:
            return X.real.copy()
    return X


def check_branch_cut(M, tol=1e-12):
    """Raise :class:`SingularityError` if ``M`` has an eigenvalue on (-inf, 0]."""
    eig = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(eig), initial=0.0)))
    for lam in eig:
        if abs(lam.imag) <= tol * scale and lam.real <= tol * scale:
            raise SingularityError(
                f"eigenvalue {lam:.6g} lies on the closed negative real axis", lam)
    return eig


def logm(M):
    """Principal matrix logarithm."""
    M = _as_square(M)
    check_branch_cut(M)
    if M.shape[0] == 1:
        return np.log(M.astype(complex)).real if np.isrealobj(M) else np.log(M)
    L = scipy.linalg.logm(M, disp=False)[0]
    return _real_if_close(np.asarray(L), M)


def frac_power(M, a):
    """Principal power ``M**a`` computed as ``expm(a * logm(M))``."""
    M = _as_square(M)
    a = float(a)
    check_branch_cut(M)
    if a == 1.0:
        return np.array(M, copy=True)
    if a == 0.0:
        return np.eye(M.shape[0])
    if M.shape[0] == 1:
        return np.power(M.astype(complex), a).real if np.isrealobj(M) else np.power(M, a)
    if np.allclose(M, np.diag(np.diagonal(M)), rtol=0.0, atol=0.0):
        d = np.diagonal(M).astype(complex) ** a
        return _real_if_close(np.diag(d), M)
    L = scipy.linalg.logm(M, disp=False)[0]
    return _real_if_close(expm(a * L), M)


def kron_prod(A, B):
    """Kronecker product of two matrices (or row/column vectors)."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def kron_sum(A, B, *more):
    """Kronecker sum ``A ⊗ I + I ⊗ B``; extra arguments are folded left to right."""
    A = _as_square(np.atleast_2d(A), "A")
    B = _as_square(np.atleast_2d(B), "B")
    out = np.kron(A, np.eye(B.shape[0])) + np.kron(np.eye(A.shape[0]), B)
    for C in more:
        out = kron_sum(out, C)
    return out


def van_loan_block(T, right, pi):
    """Block generator ``[[T, right·pi], [0, T]]`` used for convolution integrals."""
    T = _as_square(T, "T")
    p = T.shape[0]
    right = np.asarray(right, dtype=float).reshape(p, 1)
    pi = np.asarray(pi, dtype=float).reshape(1, p)
    A = np.zeros((2 * p, 2 * p))
    A[:p, :p] = T
    A[p:, p:] = T
    A[:p, p:] = right @ pi
    return A


def conv_integral(T, t, pi, x):
    """Convolution integral ``∫_0^x exp(T(x-u)) t pi exp(T u) du``.

    Read off as the upper-right block of ``expm(x * [[T, t pi], [0, T]])``.
    """
    T = _as_square(T, "T")
    x = float(x)
    if x < 0:
        raise ValueError("x must be nonnegative")
    p = T.shape[0]
    if x == 0.0:
        return np.zeros((p, p))
    return expm(x * van_loan_block(T, t, pi))[:p, p:]
