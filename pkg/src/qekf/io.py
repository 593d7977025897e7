"""CSV import/export for measurement records and filter trajectories.

Floats are written with ``repr``, the shortest string that round-trips to
the same IEEE-754 double, so a read after a write is exact.

Record rows are indexed by the time grid: row ``k`` holds ``t_k``, the
increments over ``[t_{k-1}, t_k]`` (zeros on row 0) and the conditional
expectations at ``t_k``.
"""

import csv
from pathlib import Path

import numpy as np

from .sme import COUNTING, HOMODYNE, TrajectoryRecord


def _fmt(v):
    return repr(float(v))


def _write_rows(path, header, columns):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*columns):
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _read_table(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise ValueError(f"{path} is empty")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def record_columns(record):
    """Header and column arrays of a record in export order."""
    n = record.n_steps
    header = ["t"]
    cols = [record.times]
    for j in range(record.dy.shape[1]):
        header.append(f"dy_{j + 1}")
        cols.append(np.concatenate([[0.0], record.dy[:, j]]))
    for j in range(record.dN.shape[1]):
        header.append(f"dN_{j + 1}")
        cols.append(np.concatenate([[0], record.dN[:, j]]))
    if record.expectations is not None:
        for j, name in enumerate(record.expectation_names):
            header.append(name)
            cols.append(record.expectations[: n + 1, j])
    return header, cols


def write_record_csv(path, record):
    header, cols = record_columns(record)
    return _write_rows(path, header, cols)


def read_record_csv(path, channels):
    """Read a record written by :func:`write_record_csv`.

    ``channels`` gives the detector assignment; its homodyne and counting
    entries must match the ``dy_*`` and ``dN_*`` columns in number.
    """
    header, data = _read_table(path)
    channels = tuple(channels)
    dy_cols = [i for i, h in enumerate(header) if h.startswith("dy_")]
    dn_cols = [i for i, h in enumerate(header) if h.startswith("dN_")]
    n_h = sum(ch.kind == HOMODYNE for ch in channels)
    n_c = sum(ch.kind == COUNTING for ch in channels)
    if (len(dy_cols), len(dn_cols)) != (n_h, n_c):
        raise ValueError(
            f"{path}: record has {len(dy_cols)} dy and {len(dn_cols)} dN columns, "
            f"channels need {n_h} and {n_c}"
        )
    if header[0] != "t" or len(data) == 0:
        raise ValueError(f"{path}: not a trajectory record")
    exp_cols = [i for i in range(1, len(header)) if i not in dy_cols and i not in dn_cols]
    dN = data[1:, dn_cols]
    if np.any((dN != 0) & (dN != 1)):
        raise ValueError(f"{path}: counting marks must be 0 or 1")
    return TrajectoryRecord(
        times=data[:, 0],
        channels=channels,
        dy=data[1:, dy_cols],
        dN=dN.astype(np.int8),
        expectation_names=tuple(header[i] for i in exp_cols),
        expectations=data[:, exp_cols],
    )


def filter_header(n, m):
    header = ["t"] + [f"x_hat_{i + 1}" for i in range(n)]
    header += [f"P_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    header += [f"K_{i + 1}{j + 1}" for i in range(n) for j in range(m)]
    return header


def write_filter_csv(path, traj):
    """Write ``t, x_hat_*, P_ij (row-major), K_ij`` for every grid point."""
    n = traj.x_hat.shape[1]
    m = traj.K.shape[2]
    rows = len(traj.times)
    cols = [traj.times]
    cols += list(traj.x_hat.T)
    cols += list(traj.P.reshape(rows, n * n).T)
    cols += list(traj.K.reshape(rows, n * m).T)
    return _write_rows(path, filter_header(n, m), cols)


def read_filter_csv(path, n, m):
    """Return ``(times, x_hat, P, K)`` arrays from a filter CSV."""
    header, data = _read_table(path)
    if header != filter_header(n, m):
        raise ValueError(f"{path}: header does not match n={n}, m={m}")
    rows = len(data)
    x = data[:, 1 : 1 + n]
    P = data[:, 1 + n : 1 + n + n * n].reshape(rows, n, n)
    K = data[:, 1 + n + n * n :].reshape(rows, n, m)
    return data[:, 0], x, P, K


def write_table(path, header, rows):
    """Write rows of mixed strings and numbers; numbers use ``repr``."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _fmt(v)
