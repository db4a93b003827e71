"""Complex Hermitian matrix primitives.

All routines operate on plain ``numpy`` arrays (complex128).  Inputs declared
Hermitian are validated against an absolute tolerance and symmetrized as
``(A + A^H) / 2`` before any decomposition is taken.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPsdError, NumericalError, ValidationError

HERMITIAN_ATOL = 1e-12


def ensure_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate that ``a`` is square and Hermitian within ``atol``, return the
    symmetrized copy ``(a + a^H) / 2``."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(float))):
        raise ValidationError("matrix contains non-finite entries")
    dev = np.max(np.abs(a - a.conj().T))
    if dev > atol:
        raise ValidationError(
            f"matrix is not Hermitian: max |A - A^H| = {dev:.3e} exceeds {atol:.1e}"
        )
    return 0.5 * (a + a.conj().T)


def hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with real eigenvalues ``w`` sorted descending and the
    matching orthonormal eigenvectors in the columns of ``v``, so that
    ``a = v @ diag(w) @ v^H``.
    """
    a = ensure_hermitian(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(
            "eigendecomposition did not converge",
            diagnostics={"matrix": a, "error": str(exc)},
        ) from exc
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def matrix_sqrt(k: np.ndarray, eig_floor: float = -1e-10) -> np.ndarray:
    """Hermitian PSD square root: returns ``s`` with ``s @ s = k``.

    Eigenvalues in ``[eig_floor, 0)`` are treated as rounding noise and
    clamped to zero; anything below ``eig_floor`` raises :class:`NotPsdError`.
    """
    w, v = hermitian_eig(k)
    if np.min(w) < eig_floor:
        raise NotPsdError(
            f"matrix is not PSD: min eigenvalue {np.min(w):.3e} below {eig_floor:.1e}"
        )
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.conj().T
    return 0.5 * (s + s.conj().T)


def trace_inner(h: np.ndarray, w: np.ndarray) -> float:
    """Real trace inner product ``Re tr(H W)`` of two Hermitian matrices."""
    h = np.asarray(h, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if h.shape != w.shape:
        raise ValidationError(f"dimension mismatch: {h.shape} vs {w.shape}")
    # For Hermitian H, W: tr(H W) = sum_ij H_ij conj(W_ij), already real.
    return float(np.real(np.sum(h * np.conj(w))))


def min_eigenvalue(a: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix (no sorting overhead)."""
    return float(np.min(np.linalg.eigvalsh(0.5 * (a + np.conj(np.swapaxes(a, -1, -2))))))


def is_psd(a: np.ndarray, rel_tol: float = 1e-8) -> bool:
    """PSD check used on every covariance returned by the solvers:
    min eigenvalue >= -rel_tol * trace."""
    a = np.asarray(a, dtype=complex)
    tr = float(np.real(np.trace(a)))
    return min_eigenvalue(a) >= -rel_tol * max(tr, 0.0) - 1e-300
