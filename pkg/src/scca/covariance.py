"""Dataset ingestion, centering/scaling and cross-covariance blocks.

Views are n x p observation matrices (rows = samples). Cross-covariance
blocks use the divisor n by default; ``divisor="n-1"`` is available for
cross-tool comparison. Sparsity patterns restrict blocks to active
coordinates while remembering the original (global) indices, so directions
estimated on shrunken problems can be re-expanded to full length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptySupportError, ParseError, StateError

_MEAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Boolean mask over the coordinates of one canonical direction."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 1:
            raise DimensionError("pattern bits must be a 1-d boolean vector")
        object.__setattr__(self, "bits", bits)

    @property
    def size(self) -> int:
        return int(self.bits.size)

    @property
    def active_count(self) -> int:
        return int(self.bits.sum())

    def indices(self) -> np.ndarray:
        """Global indices of the active coordinates, in original order."""
        return np.flatnonzero(self.bits)

    @classmethod
    def all_true(cls, p: int) -> "SparsityPattern":
        return cls(np.ones(p, dtype=bool))

    @classmethod
    def from_indices(cls, indices, p: int) -> "SparsityPattern":
        bits = np.zeros(p, dtype=bool)
        bits[np.asarray(indices, dtype=int)] = True
        return cls(bits)


@dataclass(eq=False)
class ViewMatrix:
    """One view: n samples of p variables, with names and transform state."""

    data: np.ndarray
    names: list[str]
    centered: bool = False
    scaled: bool = False
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise DimensionError("view data must be a 2-d matrix")
        n, p = self.data.shape
        if n < 2:
            raise DimensionError(f"need at least 2 samples, got {n}")
        if p < 1:
            raise DimensionError("need at least 1 variable")
        if not np.all(np.isfinite(self.data)):
            raise DimensionError("view contains non-finite entries")
        if len(self.names) != p:
            raise DimensionError(f"{len(self.names)} names for {p} columns")
        if self.centered:
            tol = _MEAN_TOL * (np.abs(self.data).max(axis=0, initial=0.0) + 1.0)
            bad = np.abs(self.data.mean(axis=0)) > tol
            if bad.any():
                raise StateError(
                    f"view marked centered but column {np.flatnonzero(bad)[0]} has "
                    "non-zero mean")

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def p(self) -> int:
        return int(self.data.shape[1])


@dataclass(eq=False)
class CrossCovariance:
    """A p_r x p_s sample cross-covariance block with shrinkage provenance."""

    block: np.ndarray
    view_ids: tuple[int, int] = (0, 1)
    row_support: SparsityPattern | None = None
    col_support: SparsityPattern | None = None

    def __post_init__(self):
        self.block = np.asarray(self.block, dtype=float)
        if self.block.ndim != 2:
            raise DimensionError("covariance block must be 2-d")
        if self.row_support is not None and self.row_support.active_count != self.block.shape[0]:
            raise DimensionError("row support does not match block height")
        if self.col_support is not None and self.col_support.active_count != self.block.shape[1]:
            raise DimensionError("column support does not match block width")

    @property
    def shape(self) -> tuple[int, int]:
        return self.block.shape


def _default_names(p: int) -> list[str]:
    return [f"V{j + 1}" for j in range(p)]


def _is_number(token: str) -> bool:
    try:
        value = float(token)
    except ValueError:
        return False
    return np.isfinite(value)


def load_view(path, delimiter: str | None = None, header: bool | None = None) -> ViewMatrix:
    """Read a delimited numeric matrix into a ViewMatrix.

    The delimiter is inferred from the extension (.tsv/.tab -> tab, else
    comma) unless given. ``header=None`` auto-detects a name row: the first
    row is a header iff any of its cells is not a finite number.
    """
    path = Path(path)
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() in {".tsv", ".tab"} else ","
    text = path.read_text()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty file", line=1)

    rows = [line.split(delimiter) for line in lines]
    if header is None:
        header = not all(_is_number(tok) for tok in rows[0])
    if header:
        names = [tok.strip() for tok in rows[0]]
        body, first_line = rows[1:], 2
    else:
        names = None
        body, first_line = rows, 1
    if not body:
        raise DimensionError("need at least 2 samples, got 0")

    p = len(body[0])
    data = np.empty((len(body), p), dtype=float)
    for k, row in enumerate(body):
        lineno = first_line + k
        if len(row) != p:
            raise ParseError(f"expected {p} fields, got {len(row)}", line=lineno)
        for j, tok in enumerate(row):
            try:
                value = float(tok)
            except ValueError:
                raise ParseError(f"non-numeric value {tok.strip()!r} in column {j + 1}",
                                 line=lineno) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite value {tok.strip()!r} in column {j + 1}",
                                 line=lineno)
            data[k, j] = value

    if names is None:
        names = _default_names(p)
    elif len(names) != p:
        raise ParseError(f"header has {len(names)} names for {p} columns", line=1)
    return ViewMatrix(data, names, centered=False, scaled=False)


def write_view(view: ViewMatrix, path, delimiter: str | None = None,
               header: bool = True) -> Path:
    """Write a view back to disk with full-precision floats (round-trips to 1e-12)."""
    path = Path(path)
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() in {".tsv", ".tab"} else ","
    lines = []
    if header:
        lines.append(delimiter.join(view.names))
    for row in view.data:
        lines.append(delimiter.join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def center_scale(v: ViewMatrix, scale: bool = False) -> ViewMatrix:
    """Remove column means; optionally rescale columns to unit sample sd.

    Columns that are constant (zero variance after centering) are left
    all-zero and reported in the returned view's warning list rather than
    rejected, so column indices stay stable.
    """
    data = v.data - v.data.mean(axis=0)
    warnings = list(v.warnings)
    if scale:
        sd = data.std(axis=0, ddof=1)
        tol = 1e-12 * (np.abs(v.data).max(axis=0, initial=0.0) + 1.0)
        constant = sd <= tol
        if constant.any():
            for j in np.flatnonzero(constant):
                warnings.append(f"constant column {v.names[j]!r} zeroed during scaling")
            data[:, constant] = 0.0
        safe = np.where(constant, 1.0, sd)
        data = data / safe
    return ViewMatrix(data, list(v.names), centered=True, scaled=scale or v.scaled,
                      warnings=tuple(warnings))


def cross_covariance(a: ViewMatrix, b: ViewMatrix, divisor: str = "n",
                     view_ids: tuple[int, int] = (0, 1)) -> CrossCovariance:
    """Sample cross-covariance block of two centered views sharing samples."""
    if a.n != b.n:
        raise DimensionError(f"sample counts differ: {a.n} vs {b.n}")
    if not (a.centered and b.centered):
        raise StateError("cross_covariance requires centered views")
    if divisor == "n":
        div = a.n
    elif divisor in ("n-1", "nm1"):
        div = a.n - 1
    else:
        raise ValueError(f"unknown divisor {divisor!r}")
    block = a.data.T @ b.data / div
    return CrossCovariance(block, view_ids=view_ids)


def _compose_support(existing: SparsityPattern | None, keep: SparsityPattern) -> SparsityPattern:
    """Express a restriction of the current axis in the original index space."""
    if existing is None:
        return keep
    idx = existing.indices()[keep.bits]
    return SparsityPattern.from_indices(idx, existing.size)


def shrink(c: CrossCovariance, rows: SparsityPattern, cols: SparsityPattern) -> CrossCovariance:
    """Restrict a block to the active rows/columns of two patterns.

    All-true patterns are a no-op on their axis. The returned block carries
    composed supports so entries keep their original global indices.
    """
    if rows.size != c.block.shape[0]:
        raise DimensionError(f"row pattern length {rows.size} != block rows {c.block.shape[0]}")
    if cols.size != c.block.shape[1]:
        raise DimensionError(f"col pattern length {cols.size} != block cols {c.block.shape[1]}")
    if rows.active_count == 0:
        raise EmptySupportError("row pattern has no active coordinates", side="rows")
    if cols.active_count == 0:
        raise EmptySupportError("column pattern has no active coordinates", side="cols")
    sub = c.block[np.ix_(rows.indices(), cols.indices())]
    return CrossCovariance(
        sub, view_ids=c.view_ids,
        row_support=_compose_support(c.row_support, rows),
        col_support=_compose_support(c.col_support, cols))
