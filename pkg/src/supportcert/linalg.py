"""Dense linear algebra helpers and the plain-text matrix format.

Matrices and vectors are plain :class:`numpy.ndarray` objects; the
``as_matrix``/``as_vector`` guards reject non-finite input before any
factorization sees it.
"""

import io
import warnings

import numpy as np
import scipy.linalg

from .errors import SingularMatrixError

__all__ = [
    "RANK_TOL",
    "as_matrix",
    "as_vector",
    "pseudo_inverse",
    "solve_square",
    "op_norm_inf_inf",
    "op_norm_1_inf",
    "op_norm_2_inf",
    "numerical_rank",
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
]

RANK_TOL = 1e-10
PIVOT_TOL = 1e-12


def as_matrix(A):
    """Return ``A`` as a 2-D float array, rejecting NaN/Inf and empty shapes."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"matrix must have at least one row and column, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def as_vector(u):
    u = np.asarray(u, dtype=float).reshape(-1)
    if not np.all(np.isfinite(u)):
        raise ValueError("vector has non-finite entries")
    return u


def pseudo_inverse(A, tol=RANK_TOL):
    """Moore-Penrose pseudo-inverse from a thin SVD.

    Singular values at or below ``tol * sigma_max`` are treated as zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_matrix(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], A.shape[0]))
    keep = s > tol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def solve_square(A, b):
    """Solve ``A x = b`` with partial-pivot LU.

    Raises :class:`SingularMatrixError` when a pivot of ``U`` falls below
    ``1e-12`` relative to the largest entry of ``A``.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"solve_square needs a square matrix, got {A.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side has non-finite entries")
    scale = np.abs(A).max()
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        # singular pivots are reported below as an error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {PIVOT_TOL:g} relative threshold"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def op_norm_inf_inf(A):
    """Induced l-inf -> l-inf norm: largest absolute row sum."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=1).max())


def op_norm_1_inf(A):
    """Induced l1 -> l-inf norm: largest absolute entry."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.abs(A).max())


def op_norm_2_inf(A):
    """Induced l2 -> l-inf norm: largest row Euclidean norm."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.sqrt((A * A).sum(axis=1)).max())


def numerical_rank(A, tol=RANK_TOL):
    """Number of singular values above ``tol * sigma_max``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


# -- text formats -----------------------------------------------------------

def _data_lines(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_numbers(tokens, where):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None


def read_matrix(source):
    """Parse the matrix text format.

    The first non-comment line holds ``rows cols``; each following line is
    one row of whitespace-separated decimals. ``source`` is a path or an
    open text stream.
    """
    text = _read_text(source)
    lines = list(_data_lines(text))
    if not lines:
        raise ValueError("empty matrix file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"matrix header must be 'rows cols', got {lines[0]!r}")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"bad matrix header {lines[0]!r}") from None
    if rows < 1 or cols < 1:
        raise ValueError(f"bad matrix dimensions {rows}x{cols}")
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    data = []
    for i, line in enumerate(body):
        row = _parse_numbers(line.split(), f"row {i + 1}")
        if len(row) != cols:
            raise ValueError(f"row {i + 1} has {len(row)} entries, expected {cols}")
        data.append(row)
    return as_matrix(np.array(data))


def write_matrix(A, dest):
    A = as_matrix(A)
    buf = io.StringIO()
    buf.write(f"{A.shape[0]} {A.shape[1]}\n")
    for row in A:
        buf.write(" ".join(repr(float(v)) for v in row))
        buf.write("\n")
    _write_text(dest, buf.getvalue())


def read_vector(source):
    """Parse a vector file.

    Accepts a header with the length ``n`` followed by ``n`` decimals in any
    line layout, or the matrix format with a single row or column.
    """
    text = _read_text(source)
    lines = list(_data_lines(text))
    if not lines:
        raise ValueError("empty vector file")
    header = lines[0].split()
    if len(header) == 2:
        return read_matrix(io.StringIO(text)).reshape(-1)
    if len(header) != 1:
        raise ValueError(f"vector header must be 'n', got {lines[0]!r}")
    try:
        n = int(header[0])
    except ValueError:
        raise ValueError(f"bad vector header {lines[0]!r}") from None
    values = _parse_numbers(" ".join(lines[1:]).split(), "vector")
    if n < 1 or len(values) != n:
        raise ValueError(f"expected {n} entries, found {len(values)}")
    return as_vector(values)


def write_vector(u, dest):
    u = as_vector(u)
    _write_text(dest, f"{u.size}\n" + "\n".join(repr(float(v)) for v in u) + "\n")


def _read_text(source):
    if hasattr(source, "read"):
        return source.read()
    with open(source) as fh:
        return fh.read()


def _write_text(dest, text):
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)
