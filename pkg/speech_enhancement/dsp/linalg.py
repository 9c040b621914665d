"""
Hermitian positive (semi)definite matrix algebra.

All functions accept a single ``(M, M)`` matrix or a stack ``(..., M, M)`` and
operate on the trailing two axes. Inputs are re-symmetrized as ``(A + A^H) / 2``
before any decomposition.

Eigenvalues used for inversion are floored at ``max(1e-10 * lambda_max, 1e-300)``
per matrix. Steering-type eigenvectors are phase-normalized so that the entry at
an anchor index is real and nonnegative (falling back to the largest-magnitude
entry when the anchor entry vanishes). When the top eigenvalue is repeated any
unit vector in its eigenspace is valid; the vector returned is whatever the
LAPACK routine produces, which is deterministic for identical input.
"""

from typing import NamedTuple

import numpy as np

from ..exceptions import (
    DegenerateMatrixError,
    InvalidInputError,
    SingularMatrixError,
)

HERMITIAN_ATOL = 1e-12
EIGEN_FLOOR_RELATIVE = 1e-10
EIGEN_FLOOR_ABSOLUTE = 1e-300
PHASE_ANCHOR_MIN = 1e-12
LOADING_RELATIVE = 1e-10


class EigenDecomposition(NamedTuple):
    """Eigenvalues in descending order with matching unit-norm eigenvector columns"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _first_index(mask):
    if mask.ndim == 0:
        return None
    hits = np.argwhere(mask)
    return tuple(hits[0]) if len(hits) else None


def _as_square(a):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {a.shape}")
    return a


def conj_transpose(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a):
    """Return (A + A^H) / 2"""
    return 0.5 * (a + conj_transpose(a))


def check_hermitian(a, atol=HERMITIAN_ATOL):
    """
    Raise InvalidInputError if ``a`` is not Hermitian.

    The tolerance is absolute for matrices with entries of magnitude up to one
    and scales with the largest entry above that.
    """
    a = _as_square(a)
    if a.size == 0:
        return a
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix contains non-finite entries", index=_first_index(
            ~np.all(np.isfinite(a), axis=(-1, -2))))
    scale = max(1.0, float(np.max(np.abs(a))))
    deviation = np.max(np.abs(a - conj_transpose(a)), axis=(-1, -2))
    bad = deviation > atol * scale
    if np.any(bad):
        raise InvalidInputError(
            f"matrix is not Hermitian (deviation {float(np.max(deviation)):.3e})",
            index=_first_index(bad),
        )
    return a


def _eigh_descending(a):
    values, vectors = np.linalg.eigh(hermitize(a))
    return values[..., ::-1], vectors[..., ::-1]


def _floored(values, what):
    top = values[..., 0]
    bad = ~(top > 0) | ~np.all(np.isfinite(values), axis=-1)
    if np.any(bad):
        raise SingularMatrixError(f"{what} has no positive eigenvalue", index=_first_index(bad))
    floor = np.maximum(EIGEN_FLOOR_RELATIVE * top, EIGEN_FLOOR_ABSOLUTE)
    return np.maximum(values, floor[..., None])


def _compose(vectors, values):
    return hermitize((vectors * values[..., None, :]) @ conj_transpose(vectors))


def fix_phase(vectors, anchor=0):
    """Rotate each vector (last axis) so its anchor entry is real and nonnegative"""
    vectors = np.asarray(vectors)
    reference = vectors[..., anchor]
    largest = np.take_along_axis(
        vectors, np.argmax(np.abs(vectors), axis=-1)[..., None], axis=-1
    )[..., 0]
    reference = np.where(np.abs(reference) < PHASE_ANCHOR_MIN, largest, reference)
    return vectors * np.exp(-1j * np.angle(reference))[..., None]


def hermitian_eig(a, check=True):
    """Eigendecomposition with eigenvalues sorted in descending order"""
    a = check_hermitian(a) if check else _as_square(a)
    values, vectors = _eigh_descending(a)
    return EigenDecomposition(values, vectors)


def principal_eigenvector(a, anchor=0, check=True):
    """
    Unit-norm eigenvector of the largest eigenvalue, phase-fixed at ``anchor``.

    Raises DegenerateMatrixError when the largest eigenvalue is not positive.
    """
    a = check_hermitian(a) if check else _as_square(a)
    if not 0 <= anchor < a.shape[-1]:
        raise InvalidInputError(f"anchor index {anchor} out of range for M={a.shape[-1]}")
    values, vectors = _eigh_descending(a)
    bad = ~(values[..., 0] > EIGEN_FLOOR_ABSOLUTE)
    if np.any(bad):
        raise DegenerateMatrixError("largest eigenvalue is not positive", index=_first_index(bad))
    return fix_phase(vectors[..., :, 0], anchor)


def matrix_sqrt(a, check=True):
    """Principal square root of a Hermitian PSD matrix (negative round-off clipped)"""
    a = check_hermitian(a) if check else _as_square(a)
    values, vectors = _eigh_descending(a)
    return _compose(vectors, np.sqrt(np.clip(values, 0.0, None)))


def matrix_inv_sqrt(a, check=True):
    a = check_hermitian(a) if check else _as_square(a)
    values, vectors = _eigh_descending(a)
    return _compose(vectors, 1.0 / np.sqrt(_floored(values, "matrix")))


def inverse(a, check=True):
    a = check_hermitian(a) if check else _as_square(a)
    values, vectors = _eigh_descending(a)
    return _compose(vectors, 1.0 / _floored(values, "matrix"))


def _floored_inverse_and_logdet(a):
    values, vectors = _eigh_descending(a)
    values = _floored(values, "matrix")
    return _compose(vectors, 1.0 / values), np.sum(np.log(values), axis=-1)


def inverse_and_logdet(a):
    """
    Floored inverse together with log det of the floored matrix.

    Matrices are factored by Cholesky; a matrix whose condition number may
    exceed the eigenvalue floor (tr(A) ||A^-1||_F bounds it from above) or
    that is not positive definite goes through the eigendecomposition instead,
    so both routes agree wherever the floor is inactive.
    """
    a = hermitize(_as_square(a))
    if a.ndim == 2:
        inv, logdet = inverse_and_logdet(a[None])
        return inv[0], logdet[0]
    try:
        lower = np.linalg.cholesky(a)
        lower_inv = np.linalg.inv(lower)
    except np.linalg.LinAlgError:
        return _floored_inverse_and_logdet(a)

    inv = hermitize(conj_transpose(lower_inv) @ lower_inv)
    with np.errstate(divide='ignore', invalid='ignore'):
        logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(lower, axis1=-2, axis2=-1))), axis=-1)
        bound = np.real(np.trace(a, axis1=-2, axis2=-1)) * np.linalg.norm(inv, axis=(-2, -1))
    rough = ~(bound < 1.0 / EIGEN_FLOOR_RELATIVE) | ~np.isfinite(logdet)
    if np.any(rough):
        inv[rough], logdet[rough] = _floored_inverse_and_logdet(a[rough])
    return inv, logdet


def regularize(a, relative=LOADING_RELATIVE):
    """Add ``relative * trace(A) / M`` to the diagonal"""
    a = _as_square(a)
    m = a.shape[-1]
    loading = relative * np.real(np.trace(a, axis1=-2, axis2=-1)) / m
    return a + loading[..., None, None] * np.eye(m)


def riccati_solution(c, psi):
    """
    Hermitian PD solution G of G Psi G = C.

    G = Psi^(-1/2) (Psi^(1/2) C Psi^(1/2))^(1/2) Psi^(-1/2), the geometric mean
    of Psi^-1 and C.
    """
    values, vectors = _eigh_descending(_as_square(psi))
    values = _floored(values, "psi")
    root = _compose(vectors, np.sqrt(values))
    inv_root = _compose(vectors, 1.0 / np.sqrt(values))
    inner = matrix_sqrt(root @ c @ root, check=False)
    return hermitize(inv_root @ inner @ inv_root)


def geometric_mean_update(g_old, phi, psi, check=True):
    """
    Spatial covariance update G <- Psi^-1 # (G_old Phi G_old).

    The result satisfies G Psi G = G_old Phi G_old.
    """
    if check:
        g_old, phi, psi = (check_hermitian(m) for m in (g_old, phi, psi))
    return riccati_solution(g_old @ phi @ g_old, psi)


def trace_product(a, b):
    """Real part of tr(A B)"""
    a, b = _as_square(a), _as_square(b)
    if a.shape[-1] != b.shape[-1]:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return np.real(np.einsum('...ij,...ji->...', a, b))
