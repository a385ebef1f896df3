"""Small dense Hermitian algebra and the complex-to-real lifting used by the QCQP layer.

A complex vector ``w = u + jv`` is lifted to ``[u; v]``.  A Hermitian ``A = B + jC``
lifts to the real symmetric ``[[B, -C], [C, B]]`` so that ``w^H A w`` equals the
lifted quadratic form.
"""

import numpy as np

HERMITIAN_TOL = 1e-12


class HermitianMatrix:
    """Complex square matrix validated (and symmetrized) to be Hermitian."""

    __slots__ = ("array",)

    def __init__(self, A, tol: float = HERMITIAN_TOL):
        A = np.asarray(A, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
        if np.max(np.abs(A - A.conj().T), initial=0.0) > tol * scale:
            raise ValueError("matrix is not Hermitian")
        self.array = 0.5 * (A + A.conj().T)

    @property
    def shape(self):
        return self.array.shape

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)


def _as_hermitian(A) -> np.ndarray:
    if isinstance(A, HermitianMatrix):
        return A.array
    return HermitianMatrix(A).array


def jacobi_eigenvalues(S, tol: float = 1e-15, max_sweeps: int = 64) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by the cyclic Jacobi method, ascending.

    Rotations are applied in row-major ``(p, q)`` order every sweep, so the result
    is deterministic for a given input.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("expected a square matrix")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(A), initial=0.0))):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        return np.sort(np.diag(A).copy())
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, np.sum(A**2) - np.sum(np.diag(A) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    return np.sort(np.diag(A).copy())


def hermitian_eigenvalues(A) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, ascending.

    The lifted real matrix carries each eigenvalue twice; every other sorted
    value is kept.
    """
    H = _as_hermitian(A)
    if not np.any(H.imag):
        return jacobi_eigenvalues(H.real)
    return jacobi_eigenvalues(lift_hermitian_form(H))[::2]


def max_eigenvalue(A) -> float:
    return float(hermitian_eigenvalues(A)[-1])


def lift_hermitian_form(A) -> np.ndarray:
    H = _as_hermitian(A)
    B, C = H.real, H.imag
    return np.block([[B, -C], [C, B]])


def lift_vector(w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.concatenate([w.real, w.imag])


def unlift_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


def lift_linear(g) -> np.ndarray:
    """Real coefficient vector ``c`` with ``c @ lift_vector(w) == 2 Re{g^H w}``."""
    g = np.asarray(g, dtype=complex)
    return 2.0 * np.concatenate([g.real, g.imag])


def quadratic_form(A, w) -> float:
    w = np.asarray(w, dtype=complex)
    return float(np.real(np.vdot(w, np.asarray(A) @ w)))


def is_psd(A, tol: float = 1e-9) -> bool:
    """Eigenvalue-floor test ``lambda_min >= -tol * max(1, ||A||)`` (real symmetric or Hermitian)."""
    A = np.asarray(A)
    if A.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.iscomplexobj(A):
        A = lift_hermitian_form(A)
    return bool(np.linalg.eigvalsh(0.5 * (A + A.T))[0] >= -tol * scale)
