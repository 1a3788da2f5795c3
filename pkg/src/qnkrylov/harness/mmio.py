"""MatrixMarket input for symmetric coordinate matrices."""

from __future__ import annotations

from pathlib import Path

import scipy.io
import scipy.sparse

from ..core import SymmetricOperator

__all__ = ["MatrixMarketError", "read_matrix_market"]


class MatrixMarketError(ValueError):
    """The file is not a readable real symmetric coordinate MatrixMarket file."""


def read_matrix_market(path) -> SymmetricOperator:
    """Read a real (or integer) symmetric coordinate file into a CSR-backed operator.

    Parsing is delegated to :mod:`scipy.io`, which mirrors the stored
    triangle.  Anything other than a square ``coordinate``/``symmetric``
    real matrix is rejected with :class:`MatrixMarketError`.
    """
    path = Path(path)
    try:
        rows, cols, _, fmt, fld, symm = scipy.io.mminfo(str(path))
    except (OSError, ValueError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: expected coordinate format, found {fmt}")
    if fld not in ("real", "integer"):
        raise MatrixMarketError(f"{path}: expected a real matrix, found {fld}")
    if symm != "symmetric":
        raise MatrixMarketError(f"{path}: expected a symmetric declaration, found {symm}")
    if rows != cols:
        raise MatrixMarketError(f"{path}: matrix is {rows}x{cols}, not square")
    try:
        M = scipy.io.mmread(str(path))
    except (OSError, ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    M = scipy.sparse.csr_matrix(M, dtype=float)
    return SymmetricOperator.from_matrix(M, name=path.stem)
