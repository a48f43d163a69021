"""Balanced longitudinal data: in-memory model, CSV ingestion, diagnostics.

The on-disk format is long CSV with header ``id,obs,y,x1,...,xp``.
Subjects are ordered by first appearance in the file, rows within a
subject by the ``obs`` column.  Ids are opaque strings; they map to
dense indices 0..n-1 in file order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .families import ResponseFamily, get_family


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel: n subjects with m observations of p covariates each.

    ``X`` has shape (n, m, p) and ``Y`` shape (n, m).  Immutable after
    construction and safe for concurrent reads.  No intercept column is
    added implicitly; callers include a constant covariate explicitly.
    """

    X: np.ndarray
    Y: np.ndarray
    family: ResponseFamily
    subject_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 3:
            raise DataError(f"X must have shape (n, m, p); got {X.shape}")
        n, m, p = X.shape
        if Y.shape != (n, m):
            raise DataError(f"Y shape {Y.shape} does not match X {(n, m)}")
        if n < 1 or m < 1 or p < 1:
            raise DataError(f"empty panel dimensions (n={n}, m={m}, p={p})")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite covariate values")
        if not np.all(np.isfinite(Y)):
            raise DataError("non-finite response values")
        if self.family.binary and not np.all((Y == 0.0) | (Y == 1.0)):
            raise DataError(
                f"family {self.family.name} requires responses in {{0, 1}}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        ids = tuple(self.subject_ids) or tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise DataError(f"{len(ids)} subject ids for {n} subjects")
        object.__setattr__(self, "subject_ids", ids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def subset(self, indices: np.ndarray) -> "PanelDataset":
        """Panel restricted to the given subject indices (order preserved)."""
        idx = np.asarray(indices, dtype=int)
        if idx.size == 0:
            raise DataError("cannot take an empty subject subset")
        return PanelDataset(
            X=self.X[idx],
            Y=self.Y[idx],
            family=self.family,
            subject_ids=tuple(self.subject_ids[i] for i in idx),
        )


def load_csv(path: str | Path, family: str | ResponseFamily) -> PanelDataset:
    """Load a balanced panel from long-format CSV.

    Raises DataError for structural problems (unbalanced panel, bad
    header, non-numeric cells — reported with the 1-based file row
    number, header = row 1) and for responses outside {0, 1} under a
    binary family.
    """
    fam = get_family(family) if isinstance(family, str) else family
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[:3] != ["id", "obs", "y"]:
            raise DataError(
                f"{path}: header must be 'id,obs,y,x1,...,xp'; got {header[:4]}"
            )
        p = len(header) - 3

        # subject id -> list of (obs, y, x-row), in first-appearance order
        groups: dict[str, list[tuple[float, float, list[float]]]] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 3:
                raise DataError(
                    f"{path}: row {rownum} has {len(row)} fields, expected {p + 3}"
                )
            sid = row[0].strip()
            try:
                obs = float(row[1])
                y = float(row[2])
                xs = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            values = [obs, y, *xs]
            if not all(np.isfinite(values)):
                raise DataError(f"{path}: row {rownum}: non-finite value")
            groups.setdefault(sid, []).append((obs, y, xs))

    if len(groups) < 2:
        raise DataError(f"{path}: need at least 2 subjects, found {len(groups)}")

    m = len(next(iter(groups.values())))
    for sid, rows in groups.items():
        if len(rows) != m:
            raise DataError(
                f"{path}: unbalanced panel: subject {sid!r} has {len(rows)} "
                f"rows, expected {m}"
            )
        obs_values = [r[0] for r in rows]
        if len(set(obs_values)) != m:
            raise DataError(f"{path}: subject {sid!r} has duplicate obs values")
        rows.sort(key=lambda r: r[0])

    ids = tuple(groups)
    X = np.array([[r[2] for r in groups[sid]] for sid in ids], dtype=float)
    Y = np.array([[r[1] for r in groups[sid]] for sid in ids], dtype=float)
    if fam.binary and not np.all((Y == 0.0) | (Y == 1.0)):
        bad = Y[(Y != 0.0) & (Y != 1.0)].flat[0]
        raise DataError(
            f"{path}: response {bad!r} outside {{0, 1}} under family {fam.name}"
        )
    return PanelDataset(X=X, Y=Y, family=fam, subject_ids=ids)


def write_csv(data: PanelDataset, path: str | Path) -> None:
    """Write a panel in the long CSV format; floats keep full precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "obs", "y"] + [f"x{j + 1}" for j in range(data.p)])
        for i, sid in enumerate(data.subject_ids):
            for j in range(data.m):
                writer.writerow(
                    [sid, j + 1, repr(float(data.Y[i, j]))]
                    + [repr(float(v)) for v in data.X[i, j]]
                )


@dataclass(frozen=True)
class DesignDiagnostics:
    """Advisory design-condition report; flags never abort a run."""

    max_row_norm: float
    eigen_min: float
    eigen_max: float
    near_singular: bool

    @property
    def flags(self) -> tuple[str, ...]:
        out = []
        if self.near_singular:
            out.append(
                f"smallest design eigenvalue {self.eigen_min:.3e} < 1e-08 "
                "(near-singular design)"
            )
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "max_row_norm": self.max_row_norm,
            "eigen_min": self.eigen_min,
            "eigen_max": self.eigen_max,
            "near_singular": self.near_singular,
            "flags": list(self.flags),
        }


def validate_conditions(data: PanelDataset) -> DesignDiagnostics:
    """Report the design's extreme eigenvalues and max covariate row norm.

    The Gram matrix is (1/n) sum_i X_i' X_i (normalized by subjects, not
    rows).  A smallest eigenvalue below 1e-8 raises an advisory flag.
    """
    rows = data.X.reshape(-1, data.p)
    max_norm = float(np.sqrt((rows * rows).sum(axis=1).max()))
    gram = rows.T @ rows / data.n
    eigvals = np.linalg.eigvalsh(gram)
    eig_min = float(eigvals[0])
    eig_max = float(eigvals[-1])
    return DesignDiagnostics(
        max_row_norm=max_norm,
        eigen_min=eig_min,
        eigen_max=eig_max,
        near_singular=eig_min < 1e-8,
    )
