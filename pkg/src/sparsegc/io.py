"""Sample/model file formats and the rank-standardization transform.

SampleFile is a CSV with header ``subject,label,e_0_1,e_0_2,...`` (edges in
canonical upper-triangle order). ModelFile is one ``# {json}`` metadata line
followed by an ``i,j,coef`` edge list of nonzero coefficients. Paths ending
in ``.gz`` are read and written gzip-compressed. Writes go to a temporary
file in the target directory and are renamed into place.
"""
from __future__ import annotations

import contextlib
import csv
import gzip
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .types import CoefficientModel, DataError, EdgeIndex, SampleSet

logger = logging.getLogger(__name__)

def fmt(x: float) -> str:
    """Shortest text that round-trips a float (17 significant digits)."""
    return format(float(x), ".17g")


def _open_text(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


@contextlib.contextmanager
def atomic_write(path):
    """Yield a text handle; the file appears at ``path`` only on success.

    Gzip output is written with a zero timestamp and no file name so that
    identical content gives identical bytes.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as raw:
            if path.suffix == ".gz":
                with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                    with io.TextIOWrapper(gz, encoding="utf-8", newline="") as fh:
                        yield fh
            else:
                with io.TextIOWrapper(raw, encoding="utf-8", newline="") as fh:
                    yield fh
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    with atomic_write(path) as fh:
        fh.write(text)


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_table(path, header: list[str], rows) -> None:
    """CSV with LF line endings; floats written with :func:`fmt`."""
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# --- samples -----------------------------------------------------------------


def sample_header(num_nodes: int) -> list[str]:
    idx = EdgeIndex(num_nodes)
    return ["subject", "label"] + [f"e_{i}_{j}" for i, j in idx.pair_list]


def write_samples(path, data: SampleSet) -> None:
    rows = (
        [sid, str(int(lab))] + [fmt(v) for v in x]
        for sid, lab, x in zip(data.subject_ids, data.y, data.X)
    )
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sample_header(data.num_nodes))
        w.writerows(rows)


def _nodes_from_header(header: list[str], path) -> int:
    if header[:2] != ["subject", "label"]:
        raise DataError(f"{path}: row 1: header must start with 'subject,label'")
    num_edges = len(header) - 2
    try:
        index = EdgeIndex.from_num_edges(num_edges)
    except ValueError:
        raise DataError(f"{path}: row 1: {num_edges} edge columns is not N(N-1)/2") from None
    if header[2:] != sample_header(index.num_nodes)[2:]:
        raise DataError(f"{path}: row 1: edge columns are not in canonical e_i_j order")
    return index.num_nodes


def read_samples(path, *, num_nodes: int | None = None, require_labels: bool = True) -> SampleSet:
    """Read a SampleFile.

    Labels in {0, 1} are remapped to {-1, +1}. With ``require_labels=False``
    an empty label column is accepted and stored as +1 (for prediction on
    unlabeled subjects); use :func:`labels_present` to tell them apart.
    """
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        N = _nodes_from_header(header, path)
        if num_nodes is not None and N != num_nodes:
            raise DataError(f"{path}: row 1: file has {N} nodes, expected {num_nodes}")
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno}: {len(row)} columns, header has {len(header)}"
                )
            ids.append(row[0])
            labels.append(row[1].strip())
            try:
                rows.append(np.array(row[2:], dtype=float))
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            if not np.all(np.isfinite(rows[-1])):
                raise DataError(f"{path}: row {lineno}: non-finite edge weight")
    if not rows:
        raise DataError(f"{path}: no samples")
    y = _parse_labels(labels, path, require_labels)
    return SampleSet.from_arrays(np.vstack(rows), y, ids)


def _parse_labels(labels: list[str], path, require: bool) -> np.ndarray:
    if not require and all(v == "" for v in labels):
        return np.ones(len(labels), dtype=int)
    try:
        y = np.array([int(float(v)) for v in labels])
    except ValueError:
        bad = next(k for k, v in enumerate(labels) if not _is_number(v))
        raise DataError(f"{path}: row {bad + 2}: label {labels[bad]!r} is not a number") from None
    values = set(y.tolist())
    if values <= {-1, 1}:
        return y
    if values <= {0, 1}:
        logger.info("%s: labels in {0, 1} remapped to {-1, +1}", path)
        return 2 * y - 1
    bad = next(k for k, v in enumerate(y) if v not in (-1, 0, 1))
    raise DataError(f"{path}: row {bad + 2}: label {labels[bad]!r} not in {{-1, +1}} or {{0, 1}}")


def _is_number(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def labels_present(path) -> bool:
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return any(row and row[1].strip() != "" for row in reader)


# --- models ------------------------------------------------------------------


def write_model(path, model: CoefficientModel, metadata: dict | None = None) -> None:
    """Write the intercept and nonzero upper-triangle coefficients."""
    C = np.asarray(model.coefficients)
    if not model.is_symmetric:
        raise DataError("only symmetric coefficient matrices can be written")
    meta = {"num_nodes": model.num_nodes, "intercept": fmt(model.intercept)}
    meta.update(metadata or {})
    idx = EdgeIndex(model.num_nodes)
    vals = C[idx.rows, idx.cols]
    nz = np.flatnonzero(vals)
    with atomic_write(path) as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("i,j,coef\n")
        for e in nz:
            fh.write(f"{idx.rows[e]},{idx.cols[e]},{fmt(vals[e])}\n")


def read_model(path) -> tuple[CoefficientModel, dict]:
    with _open_text(path, "r") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise DataError(f"{path}: row 1: expected '# {{json}}' metadata line")
        try:
            meta = json.loads(first[1:])
            N = int(meta["num_nodes"])
            intercept = float(meta["intercept"])
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: row 1: bad metadata ({exc})") from None
        reader = csv.reader(fh)
        if next(reader, None) != ["i", "j", "coef"]:
            raise DataError(f"{path}: row 2: expected header 'i,j,coef'")
        C = np.zeros((N, N))
        seen = set()
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            try:
                i, j, c = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                raise DataError(f"{path}: row {lineno}: expected 'i,j,coef'") from None
            if not 0 <= i < j < N:
                raise DataError(f"{path}: row {lineno}: need 0 <= i < j < {N}, got ({i}, {j})")
            if (i, j) in seen:
                raise DataError(f"{path}: row {lineno}: duplicate pair ({i}, {j})")
            if not np.isfinite(c):
                raise DataError(f"{path}: row {lineno}: non-finite coefficient")
            seen.add((i, j))
            C[i, j] = C[j, i] = c
    return CoefficientModel(C, intercept), meta


# --- rank standardization ----------------------------------------------------


@dataclass(frozen=True)
class RankTransform:
    """Per-edge means and standard deviations of training ranks.

    ``zero_sd`` flags edges with constant rank; they map to 0.
    """

    means: np.ndarray
    sds: np.ndarray
    zero_sd: np.ndarray

    def apply(self, data: SampleSet) -> SampleSet:
        if data.index.num_edges != self.means.size:
            raise DataError(
                f"transform has {self.means.size} edges, data have {data.index.num_edges}"
            )
        Z = _standardize(subject_ranks(data.X), self.means, self.sds, self.zero_sd)
        return SampleSet.from_arrays(Z, data.y, data.subject_ids)


def subject_ranks(X: np.ndarray) -> np.ndarray:
    """Rank each row's entries (1-based, average ranks on ties)."""
    return rankdata(X, method="average", axis=1)


def _standardize(ranks, means, sds, zero_sd):
    safe = np.where(zero_sd, 1.0, sds)
    return np.where(zero_sd, 0.0, (ranks - means) / safe)


def rank_standardize(data: SampleSet) -> tuple[SampleSet, RankTransform]:
    """Rank edges within each subject, then z-score each edge across subjects.

    Uses the ``n - 1`` standard deviation. Edges whose rank is constant
    across subjects are set to 0 and flagged in the returned record.
    """
    if len(data) < 2:
        raise DataError("rank standardization needs at least 2 subjects")
    ranks = subject_ranks(data.X)
    means = ranks.mean(axis=0)
    sds = ranks.std(axis=0, ddof=1)
    zero_sd = sds == 0
    if zero_sd.any():
        logger.info("%d edges have constant rank and are set to 0", int(zero_sd.sum()))
    record = RankTransform(means, sds, zero_sd)
    Z = _standardize(ranks, means, sds, zero_sd)
    return SampleSet.from_arrays(Z, data.y, data.subject_ids), record
