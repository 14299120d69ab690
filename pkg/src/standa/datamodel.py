"""Paired source/target data under a matrix-normal noise model.

Conventions used throughout the package:

- Vectorization is row-major everywhere (``vec_rows`` concatenates rows).
  Under this convention the covariance of ``vec_rows(X)`` for a matrix-normal
  X with row covariance U and column covariance V is the Kronecker product
  U (x) V, and ``(U (x) V) vec_rows(Z) = vec_rows(U Z V^T)``.
- The full covariance ``Sigma = blockdiag(U_s (x) V_s, U_t (x) V_t)`` is never
  materialized; matrix-vector products go through the Kronecker identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-10


class DimensionError(ValueError):
    """Shape or length mismatch between coupled arrays."""


class CovarianceError(ValueError):
    """Covariance factor fails symmetry or positive semi-definiteness."""


def vec_rows(m: np.ndarray) -> np.ndarray:
    """Concatenate the rows of ``m`` into one vector."""
    return np.ascontiguousarray(m, dtype=np.float64).reshape(-1)


def mat_rows(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec_rows`; rejects length mismatches."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != rows * cols:
        raise DimensionError(
            f"cannot reshape length-{v.size} vector to {rows}x{cols}"
        )
    return v.reshape(rows, cols)


def _psd_factor(mat: np.ndarray, name: str) -> np.ndarray:
    """Cholesky-type factor L with L L^T = mat, tolerating round-off.

    Eigenvalues in [EIGENVALUE_FLOOR, 0) are clamped to zero; anything below
    the floor rejects the matrix.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise CovarianceError(f"{name}: expected a square matrix, got {mat.shape}")
    if mat.size and np.max(np.abs(mat - mat.T)) > SYMMETRY_TOL:
        raise CovarianceError(f"{name}: not symmetric within {SYMMETRY_TOL}")
    sym = 0.5 * (mat + mat.T)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.size and eigvals.min() < EIGENVALUE_FLOOR:
        raise CovarianceError(
            f"{name}: eigenvalue {eigvals.min():.3e} below floor {EIGENVALUE_FLOOR}"
        )
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def _check_psd(mat: np.ndarray, name: str) -> np.ndarray:
    out = np.asarray(mat, dtype=np.float64)
    _psd_factor(out, name)
    return out


@dataclass(frozen=True)
class DataPair:
    """Source and target data matrices sharing a feature dimension."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self) -> None:
        src = np.atleast_2d(np.asarray(self.source, dtype=np.float64))
        tgt = np.atleast_2d(np.asarray(self.target, dtype=np.float64))
        if src.shape[1] != tgt.shape[1]:
            raise DimensionError(
                f"source has {src.shape[1]} columns, target has {tgt.shape[1]}"
            )
        if tgt.shape[0] < 2:
            raise DimensionError("target needs at least 2 rows")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    @property
    def n_s(self) -> int:
        return self.source.shape[0]

    @property
    def n_t(self) -> int:
        return self.target.shape[0]

    @property
    def d(self) -> int:
        return self.source.shape[1]

    def stacked(self) -> np.ndarray:
        """Source rows followed by target rows, shape (n_s + n_t, d)."""
        return np.vstack([self.source, self.target])

    def vectorized(self) -> np.ndarray:
        """Row-major vector of the stacked data, length (n_s + n_t) * d."""
        return vec_rows(self.stacked())


@dataclass(frozen=True)
class CovarianceSpec:
    """Separable covariance factors for both domains.

    Row factors are per-domain (n_s x n_s and n_t x n_t); column factors are
    d x d. Validated PSD on construction.
    """

    row_cov_source: np.ndarray
    col_cov_source: np.ndarray
    row_cov_target: np.ndarray
    col_cov_target: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "row_cov_source", _check_psd(self.row_cov_source, "row_cov_source")
        )
        object.__setattr__(
            self, "col_cov_source", _check_psd(self.col_cov_source, "col_cov_source")
        )
        object.__setattr__(
            self, "row_cov_target", _check_psd(self.row_cov_target, "row_cov_target")
        )
        object.__setattr__(
            self, "col_cov_target", _check_psd(self.col_cov_target, "col_cov_target")
        )
        if self.col_cov_source.shape != self.col_cov_target.shape:
            raise DimensionError("column covariances of the two domains differ in size")

    @classmethod
    def identity(cls, n_s: int, n_t: int, d: int) -> "CovarianceSpec":
        """I.i.d. unit-noise default: U = I per domain, V = I."""
        return cls(np.eye(n_s), np.eye(d), np.eye(n_t), np.eye(d))

    @classmethod
    def iid_rows(cls, n_s: int, n_t: int, col_cov: np.ndarray) -> "CovarianceSpec":
        """Independent rows in both domains sharing one column covariance."""
        col_cov = np.asarray(col_cov, dtype=np.float64)
        return cls(np.eye(n_s), col_cov, np.eye(n_t), col_cov)

    @property
    def n_s(self) -> int:
        return self.row_cov_source.shape[0]

    @property
    def n_t(self) -> int:
        return self.row_cov_target.shape[0]

    @property
    def d(self) -> int:
        return self.col_cov_source.shape[0]


def sigma_times(spec: CovarianceSpec, v: np.ndarray) -> np.ndarray:
    """Multiply the full block-diagonal Kronecker covariance into ``v``.

    Works blockwise via (U (x) V) vec_rows(Z) = vec_rows(U Z V^T); the
    Kronecker product itself is never formed.
    """
    v = np.asarray(v, dtype=np.float64)
    n_s, n_t, d = spec.n_s, spec.n_t, spec.d
    if v.ndim != 1 or v.size != (n_s + n_t) * d:
        raise DimensionError(
            f"expected vector of length {(n_s + n_t) * d}, got {v.shape}"
        )
    out = np.empty_like(v)
    z_s = v[: n_s * d].reshape(n_s, d)
    z_t = v[n_s * d :].reshape(n_t, d)
    out[: n_s * d] = (spec.row_cov_source @ z_s @ spec.col_cov_source.T).reshape(-1)
    out[n_s * d :] = (spec.row_cov_target @ z_t @ spec.col_cov_target.T).reshape(-1)
    return out


def sample_matrix_normal(
    mean: np.ndarray,
    row_cov: np.ndarray,
    col_cov: np.ndarray,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Draw one matrix-normal sample ``mean + L_r E L_c^T``.

    E has i.i.d. standard-normal entries; L_r, L_c are Cholesky-type factors
    of the row and column covariances. Deterministic given a seed; pass a
    Generator to chain draws.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean = np.asarray(mean, dtype=np.float64)
    l_row = _psd_factor(np.asarray(row_cov, dtype=np.float64), "row_cov")
    l_col = _psd_factor(np.asarray(col_cov, dtype=np.float64), "col_cov")
    if l_row.shape[0] != mean.shape[0] or l_col.shape[0] != mean.shape[1]:
        raise DimensionError(
            f"mean {mean.shape} incompatible with factors "
            f"{l_row.shape[0]}x{l_row.shape[0]} / {l_col.shape[0]}x{l_col.shape[0]}"
        )
    noise = rng.standard_normal(mean.shape)
    return mean + l_row @ noise @ l_col.T
