"""Writers and readers for the toolkit's on-disk formats.

Implemented against the documented byte layouts rather than by importing
the toolkit, so the adapter can run inside a training environment where
only the model stack is installed. Byte-level conformance is pinned by
tests that load every emitted file through the toolkit's own loaders.

* SSF v1: magic ``SSFv1\\0\\0\\0``, u32 little-endian n, n float32 LE.
* EMB v1: magic ``EMBv1\\0\\0\\0``, u32 n, u32 dim, n*dim float32 LE
  row-major.
* Dataset CSV: header ``id,class,attr,f0,...,f{d-1}``, ids contiguous
  from 0; this file defines the canonical sample order for every export.
* Dynamics CSV: header ``epoch,sample_id,correct`` with one row per
  (epoch, sample).
"""

from __future__ import annotations

import csv
import struct

import numpy as np

SSF_MAGIC = b"SSFv1\x00\x00\x00"
EMB_MAGIC = b"EMBv1\x00\x00\x00"


def write_ssf(path, values) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 1:
        raise ValueError("SSF files hold one scalar per sample")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite scores")
    with open(path, "wb") as fh:
        fh.write(SSF_MAGIC)
        fh.write(struct.pack("<I", values.size))
        fh.write(values.tobytes())


def write_emb(path, matrix) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError("EMB files hold an n x dim matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())


def write_labels_csv(path, class_labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class"])
        for i, label in enumerate(class_labels):
            writer.writerow([i, int(label)])


def write_dynamics_csv(path, correctness) -> None:
    """correctness: epochs x n boolean matrix in canonical sample order."""
    correctness = np.asarray(correctness, dtype=bool)
    if correctness.ndim != 2:
        raise ValueError("dynamics must be an epochs x n matrix")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "sample_id", "correct"])
        for epoch in range(correctness.shape[0]):
            for sample_id in range(correctness.shape[1]):
                writer.writerow([epoch, sample_id, int(correctness[epoch, sample_id])])


def read_dataset_csv(path):
    """Read a toolkit dataset CSV; returns (features, class_labels, attr_labels).

    The row order is the canonical sample order all exports must follow,
    so ids have to be contiguous 0..n-1 in file order.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "class", "attr"]:
            raise ValueError(f"{path}: not a toolkit dataset CSV (header {header})")
        ids, classes, attrs, rows = [], [], [], []
        for row in reader:
            ids.append(int(row[0]))
            classes.append(int(row[1]))
            attrs.append(int(row[2]))
            rows.append([float(v) for v in row[3:]])
    if not ids:
        raise ValueError(f"{path}: dataset has no samples")
    if ids != list(range(len(ids))):
        raise ValueError(
            f"{path}: sample ids are not the canonical order 0..{len(ids) - 1}; "
            "exports would be misaligned"
        )
    return (
        np.asarray(rows, dtype=np.float32),
        np.asarray(classes, dtype=np.int64),
        np.asarray(attrs, dtype=np.int64),
    )
