"""Symmetric-matrix primitives.

Everything downstream works with dense symmetric matrices and spectral
functions of them.  ``SymPD`` symmetrizes on construction and caches a
descending eigendecomposition with a fixed eigenvector sign convention so
that every result is reproducible bit for bit.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DimensionError, InvalidMatrix, NotPositiveDefinite

__all__ = [
    "SymPD",
    "as_array",
    "sym_eig",
    "pd_power",
    "whiten",
    "psd_order_leq",
    "read_matrix_csv",
    "write_matrix_csv",
]

TOL_PSD = 1e-10


def _fix_signs(vecs: NDArray[np.float64]) -> NDArray[np.float64]:
    # first entry above noise level of each column made positive
    p = vecs.shape[0]
    if p == 0:
        return vecs
    mask = np.abs(vecs) > 1e-12
    first = np.argmax(mask, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _symmetrize(a: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("matrix has non-finite entries")
    return 0.5 * (arr + arr.T)


def _eigh_desc(sym: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    vals, vecs = np.linalg.eigh(sym)
    vals = vals[::-1].copy()
    vecs = _fix_signs(vecs[:, ::-1])
    return vals, np.ascontiguousarray(vecs)


class SymPD:
    """Dense symmetric matrix with a cached spectral decomposition.

    Parameters
    ----------
    a : array_like, shape (p, p)
        Matrix entries. The stored matrix is ``(a + a.T) / 2``.
    tol_psd : float
        Relative tolerance used by :attr:`is_psd`.

    Notes
    -----
    Eigenvalues are sorted in descending order; the first entry of each
    eigenvector column that exceeds 1e-12 in magnitude is positive.
    """

    __slots__ = ("_entries", "_eigenvalues", "_eigenvectors", "tol_psd")

    def __init__(self, a: ArrayLike, *, tol_psd: float = TOL_PSD):
        if isinstance(a, SymPD):
            entries = a._entries
            vals, vecs = a._eigenvalues, a._eigenvectors
        else:
            entries = _symmetrize(a)
            vals, vecs = _eigh_desc(entries)
        for arr in (entries, vals, vecs):
            arr.setflags(write=False)
        self._entries = entries
        self._eigenvalues = vals
        self._eigenvectors = vecs
        self.tol_psd = tol_psd

    @classmethod
    def identity(cls, p: int) -> "SymPD":
        return cls(np.eye(p))

    @classmethod
    def diag(cls, values: Iterable[float]) -> "SymPD":
        return cls(np.diag(np.asarray(list(values), dtype=np.float64)))

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> NDArray[np.float64]:
        return self._entries

    @property
    def eigenvalues(self) -> NDArray[np.float64]:
        return self._eigenvalues

    @property
    def eigenvectors(self) -> NDArray[np.float64]:
        return self._eigenvectors

    @property
    def is_pd(self) -> bool:
        return bool(self._eigenvalues[-1] > 0.0)

    @property
    def is_psd(self) -> bool:
        top = max(abs(self._eigenvalues[0]), 0.0)
        return bool(self._eigenvalues[-1] >= -self.tol_psd * top)

    def reconstruct(self) -> NDArray[np.float64]:
        v = self._eigenvectors
        return (v * self._eigenvalues) @ v.T

    def logdet(self) -> float:
        if not self.is_pd:
            raise NotPositiveDefinite("log-determinant needs a positive definite matrix")
        return float(np.sum(np.log(self._eigenvalues)))

    def trace(self) -> float:
        return float(np.trace(self._entries))

    def __array__(self, dtype=None, copy=None):
        out = self._entries
        if dtype is not None:
            out = out.astype(dtype)
        return out.copy() if copy else out

    def __repr__(self) -> str:
        return f"SymPD(dim={self.dim}, eigenvalues=[{self._eigenvalues[0]:.4g} .. {self._eigenvalues[-1]:.4g}])"


def as_array(a: ArrayLike | SymPD) -> NDArray[np.float64]:
    """Symmetric float array view of ``a`` (no eigendecomposition)."""
    if isinstance(a, SymPD):
        return a.entries
    return _symmetrize(a)


def _as_sympd(a: ArrayLike | SymPD) -> SymPD:
    return a if isinstance(a, SymPD) else SymPD(a)


def sym_eig(a: ArrayLike | SymPD) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Descending eigenvalues and sign-fixed orthonormal eigenvectors.

    Raises
    ------
    InvalidMatrix
        If ``a`` has non-finite entries or is not square.
    """
    s = _as_sympd(a)
    return s.eigenvalues, s.eigenvectors


def _spectral_power(vals, vecs, r: float, what: str = "matrix") -> NDArray[np.float64]:
    integral = float(r).is_integer()
    if (r < 0 or not integral) and not vals[-1] > 0.0:
        raise NotPositiveDefinite(
            f"{what} power {r} needs a strictly positive definite matrix "
            f"(smallest eigenvalue {vals[-1]:.3g})"
        )
    if integral and r >= 0:
        powered = vals ** int(r)
    else:
        powered = vals ** r
    out = (vecs * powered) @ vecs.T
    return 0.5 * (out + out.T)


def pd_power(a: ArrayLike | SymPD, r: float) -> SymPD:
    """Spectral power ``V diag(lambda**r) V.T``.

    Negative or fractional powers require ``a`` to be strictly positive
    definite; non-negative integer powers are defined for any symmetric
    matrix.
    """
    s = _as_sympd(a)
    return SymPD(_spectral_power(s.eigenvalues, s.eigenvectors, r))


def _inv_sqrt(psi: SymPD) -> NDArray[np.float64]:
    return _spectral_power(psi.eigenvalues, psi.eigenvectors, -0.5, "scale")


def whiten(s: ArrayLike | SymPD, psi: ArrayLike | SymPD) -> SymPD:
    """Congruence ``Psi^{-1/2} S Psi^{-1/2}``."""
    psi = _as_sympd(psi)
    s_arr = as_array(s)
    if s_arr.shape != psi.entries.shape:
        raise DimensionError(f"shapes {s_arr.shape} and {psi.entries.shape} differ")
    root = _inv_sqrt(psi)
    return SymPD(root @ s_arr @ root)


def psd_order_leq(a: ArrayLike | SymPD, b: ArrayLike | SymPD, tol: float = 1e-9) -> bool:
    """Loewner order test ``A <= B`` up to a relative tolerance.

    True iff the smallest eigenvalue of ``B - A`` is at least
    ``-tol * (1 + max |eig(B)|)``.
    """
    a_arr = as_array(a)
    b_arr = as_array(b)
    if a_arr.shape != b_arr.shape:
        raise DimensionError(f"shapes {a_arr.shape} and {b_arr.shape} differ")
    gap_min = np.linalg.eigvalsh(b_arr - a_arr)[0]
    scale = 1.0 + np.max(np.abs(np.linalg.eigvalsh(b_arr)))
    return bool(gap_min >= -tol * scale)


def read_matrix_csv(path: str | Path) -> NDArray[np.float64]:
    """Read a row-major numeric CSV; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise InvalidMatrix(f"{path}: empty CSV")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidMatrix(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2:
        raise InvalidMatrix(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise InvalidMatrix(f"{path}: non-finite entries")
    return data


def write_matrix_csv(path: str | Path, a: ArrayLike, header: list[str] | None = None) -> None:
    arr = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in arr:
            writer.writerow([f"{x:.17g}" for x in row])
