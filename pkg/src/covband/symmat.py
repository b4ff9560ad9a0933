"""Dense real symmetric matrices with packed upper-triangle storage.

Only one slot is stored per unordered index pair, so symmetry cannot be
violated.  Packed order is row-major over the upper triangle, i.e. the
order of ``numpy.triu_indices(n)``.  Indices in the Python API are 0-based.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "SymMatrix",
    "packed_index",
    "packed_size",
    "triu",
    "is_dd",
    "is_psd",
    "trace",
    "frobenius_norm",
    "hadamard",
    "elem_abs",
    "sub",
    "row_sums",
    "add_diag",
]


def packed_size(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def triu(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the packed upper triangle (read-only)."""
    rows, cols = np.triu_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _diag_positions(n: int) -> np.ndarray:
    rows, cols = triu(n)
    pos = np.flatnonzero(rows == cols)
    pos.setflags(write=False)
    return pos


@lru_cache(maxsize=None)
def _frob_weights(n: int) -> np.ndarray:
    rows, cols = triu(n)
    w = np.where(rows == cols, 1.0, 2.0)
    w.setflags(write=False)
    return w


def packed_index(i: int, j: int, n: int) -> int:
    """Position of the unordered pair ``(i, j)`` in packed storage."""
    if i > j:
        i, j = j, i
    if i < 0 or j >= n:
        raise IndexError(f"index ({i}, {j}) out of range for n={n}")
    return i * n - i * (i - 1) // 2 + (j - i)


class SymMatrix:
    """Immutable symmetric ``n x n`` matrix of float64 values.

    Args:
        n: Dimension, at least 1.
        data: Packed upper triangle of length ``n*(n+1)/2``.
    """

    __slots__ = ("n", "data")

    def __init__(self, n: int, data):
        n = int(n)
        if n < 1:
            raise ValueError(f"dimension must be >= 1, got {n}")
        arr = np.array(data, dtype=np.float64).reshape(-1)
        if arr.size != packed_size(n):
            raise ValueError(
                f"expected {packed_size(n)} packed values for n={n}, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        arr.setflags(write=False)
        self.n = n
        self.data = arr

    @classmethod
    def _wrap(cls, n: int, arr: np.ndarray) -> SymMatrix:
        # Trusted internal constructor: arr is fresh, finite and correctly sized.
        obj = object.__new__(cls)
        arr.setflags(write=False)
        obj.n = n
        obj.data = arr
        return obj

    @classmethod
    def from_dense(cls, a, atol: float = 0.0) -> SymMatrix:
        """Build from a square array; asymmetry beyond ``atol`` is an error.

        The upper triangle is kept when the input is (tolerably) asymmetric.
        """
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.abs(a - a.T) <= atol):
            raise ValueError("matrix is not symmetric")
        n = a.shape[0]
        return cls(n, a[triu(n)])

    @classmethod
    def zeros(cls, n: int) -> SymMatrix:
        return cls(n, np.zeros(packed_size(n)))

    @classmethod
    def full(cls, n: int, value: float) -> SymMatrix:
        return cls(n, np.full(packed_size(n), float(value)))

    @classmethod
    def identity(cls, n: int) -> SymMatrix:
        data = np.zeros(packed_size(n))
        data[_diag_positions(n)] = 1.0
        return cls(n, data)

    @classmethod
    def diag(cls, values) -> SymMatrix:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        n = values.size
        data = np.zeros(packed_size(n))
        data[_diag_positions(n)] = values
        return cls(n, data)

    def to_dense(self) -> np.ndarray:
        rows, cols = triu(self.n)
        a = np.empty((self.n, self.n))
        a[rows, cols] = self.data
        a[cols, rows] = self.data
        return a

    def diagonal(self) -> np.ndarray:
        return self.data[_diag_positions(self.n)].copy()

    def get(self, i: int, j: int) -> float:
        return float(self.data[packed_index(i, j, self.n)])

    def __getitem__(self, ij) -> float:
        i, j = ij
        return self.get(i, j)

    def replace(self, positions, values) -> SymMatrix:
        """Copy with packed ``positions`` overwritten by ``values``."""
        data = self.data.copy()
        data[np.asarray(positions, dtype=np.intp)] = values
        if not np.all(np.isfinite(data)):
            raise ValueError("matrix entries must be finite")
        return SymMatrix._wrap(self.n, data)

    def _check(self, other: SymMatrix) -> None:
        if not isinstance(other, SymMatrix):
            raise TypeError(f"expected SymMatrix, got {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other: SymMatrix) -> SymMatrix:
        self._check(other)
        return SymMatrix(self.n, self.data + other.data)

    def __sub__(self, other: SymMatrix) -> SymMatrix:
        self._check(other)
        return SymMatrix(self.n, self.data - other.data)

    def __mul__(self, scalar: float) -> SymMatrix:
        return SymMatrix(self.n, self.data * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        # Bitwise equality, as needed for buffer synchronisation checks.
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return other.n == self.n and self.data.tobytes() == other.data.tobytes()

    def __hash__(self) -> int:
        return hash((self.n, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"SymMatrix(n={self.n}, dense={self.to_dense().tolist()!r})"

    def trace(self) -> float:
        return float(self.data[_diag_positions(self.n)].sum())

    def frobenius_norm(self) -> float:
        return float(np.sqrt(np.dot(_frob_weights(self.n), self.data * self.data)))

    def hadamard(self, other: SymMatrix) -> SymMatrix:
        self._check(other)
        return SymMatrix(self.n, self.data * other.data)

    def abs(self) -> SymMatrix:
        return SymMatrix._wrap(self.n, np.abs(self.data))

    def row_sums(self) -> np.ndarray:
        rows, cols = triu(self.n)
        off = rows != cols
        sums = np.bincount(rows, weights=self.data, minlength=self.n)
        sums += np.bincount(cols[off], weights=self.data[off], minlength=self.n)
        return sums

    def add_diag(self, v) -> SymMatrix:
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {v.size}")
        data = self.data.copy()
        data[_diag_positions(self.n)] += v
        return SymMatrix(self.n, data)

    def is_dd(self) -> bool:
        """Whether every diagonal entry is >= the absolute off-diagonal row sum.

        Exact comparison, no tolerance.  Negative diagonals therefore fail.
        """
        rows, cols = triu(self.n)
        off = rows != cols
        mag = np.abs(self.data[off])
        offsum = np.bincount(rows[off], weights=mag, minlength=self.n)
        offsum += np.bincount(cols[off], weights=mag, minlength=self.n)
        return bool(np.all(self.diagonal() >= offsum))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.to_dense())[0])

    def is_psd(self, tol: float | None = None) -> bool:
        """Whether the smallest eigenvalue is >= ``-tol``.

        Uses the symmetric eigenvalue solver (LAPACK ``syevd`` via
        ``numpy.linalg.eigvalsh``).  The default tolerance is
        ``1e-9 * max(1, ||A||_F)``.
        """
        if tol is None:
            tol = 1e-9 * max(1.0, self.frobenius_norm())
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return self.min_eigenvalue() >= -tol

    def to_text(self) -> str:
        """``n`` on the first line, then the packed values at full precision."""
        return f"{self.n}\n" + " ".join(repr(float(v)) for v in self.data) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SymMatrix:
        tokens = text.split()
        if not tokens:
            raise ValueError("empty matrix text")
        try:
            n = int(tokens[0])
            values = [float(t) for t in tokens[1:]]
        except ValueError as exc:
            raise ValueError(f"malformed matrix text: {exc}") from None
        return cls(n, values)


def is_dd(a: SymMatrix) -> bool:
    return a.is_dd()


def is_psd(a: SymMatrix, tol: float | None = None) -> bool:
    return a.is_psd(tol)


def trace(a: SymMatrix) -> float:
    return a.trace()


def frobenius_norm(a: SymMatrix) -> float:
    return a.frobenius_norm()


def hadamard(a: SymMatrix, b: SymMatrix) -> SymMatrix:
    return a.hadamard(b)


def elem_abs(a: SymMatrix) -> SymMatrix:
    return a.abs()


def sub(a: SymMatrix, b: SymMatrix) -> SymMatrix:
    return a - b


def row_sums(a: SymMatrix) -> np.ndarray:
    return a.row_sums()


def add_diag(a: SymMatrix, v) -> SymMatrix:
    return a.add_diag(v)
