"""On-disk formats: epoch dataset directories and embedding matrices.

An epoch dataset is a directory of three files:

* ``meta.json``     -- schema version, shapes, catalogs, dtype, provenance;
* ``epochs.bin``    -- little-endian float32, C-order (n_epochs, P, T);
* ``index.csv``     -- header ``epoch_id,label_id,domain_id``, one row per epoch.

Embedding matrices for the delta/hhsw commands are headerless CSV rows of
floats; an optional JSON sidecar (``<file>.json``) declares the manifold and
curvature of Lorentz rows.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ValidationError

SCHEMA_VERSION = 1


@dataclass
class EpochDataset:
    """Labeled, domain-tagged multichannel time-series epochs."""

    epochs: np.ndarray        # (n, P, T) float32
    labels: np.ndarray        # (n,) int
    domains: np.ndarray       # (n,) int
    class_names: list
    domain_names: list
    sampling_rate: float
    provenance: str = ""

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domains = np.asarray(self.domains, dtype=np.int64)
        if self.epochs.ndim != 3:
            raise ValidationError("epochs must be (n_epochs, channels, times)")
        n = self.epochs.shape[0]
        if self.labels.shape != (n,) or self.domains.shape != (n,):
            raise ValidationError("labels and domains must tag every epoch")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValidationError("label id outside the class catalog")
        if n and (self.domains.min() < 0 or self.domains.max() >= len(self.domain_names)):
            raise ValidationError("domain id outside the domain catalog")
        if self.sampling_rate <= 0:
            raise ValidationError("sampling_rate must be positive")

    @property
    def n_channels(self):
        return self.epochs.shape[1]

    @property
    def n_times(self):
        return self.epochs.shape[2]

    def __len__(self):
        return self.epochs.shape[0]


def write_epoch_dataset(dataset: EpochDataset, directory, force=False):
    """Write the three-file layout; refuse a non-empty directory without force."""
    os.makedirs(directory, exist_ok=True)
    existing = [f for f in os.listdir(directory) if not f.startswith(".")]
    if existing and not force:
        raise ValidationError(
            f"output directory {directory} is not empty (use force to overwrite)"
        )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "n_epochs": int(len(dataset)),
        "n_channels": int(dataset.n_channels),
        "n_times": int(dataset.n_times),
        "sampling_rate": dataset.sampling_rate,
        "dtype": "float32-le",
        "class_names": list(dataset.class_names),
        "domain_names": list(dataset.domain_names),
        "provenance": dataset.provenance,
    }
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "epochs.bin"), "wb") as fh:
        fh.write(np.ascontiguousarray(dataset.epochs, dtype="<f4").tobytes())
    lines = ["epoch_id,label_id,domain_id"]
    lines += [f"{i},{dataset.labels[i]},{dataset.domains[i]}" for i in range(len(dataset))]
    with open(os.path.join(directory, "index.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_epoch_dataset(directory) -> EpochDataset:
    meta_path = os.path.join(directory, "meta.json")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read dataset metadata {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed dataset metadata {meta_path}: {exc}") from exc
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported dataset schema {meta.get('schema_version')}")
    n, p, t = meta["n_epochs"], meta["n_channels"], meta["n_times"]
    bin_path = os.path.join(directory, "epochs.bin")
    try:
        raw = np.fromfile(bin_path, dtype="<f4")
    except OSError as exc:
        raise DataFormatError(f"cannot read {bin_path}: {exc}") from exc
    if raw.size != n * p * t:
        raise DataFormatError(
            f"epochs.bin holds {raw.size} values, metadata promises {n * p * t}"
        )
    epochs = raw.reshape(n, p, t)
    index_path = os.path.join(directory, "index.csv")
    labels = np.zeros(n, dtype=np.int64)
    domains = np.zeros(n, dtype=np.int64)
    try:
        with open(index_path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "epoch_id,label_id,domain_id":
                raise DataFormatError(f"unexpected index header {header!r} in {index_path}")
            count = 0
            for line_no, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    eid, lab, dom = (int(v) for v in line.split(","))
                except ValueError as exc:
                    raise DataFormatError(f"{index_path}:{line_no}: malformed row {line!r}") from exc
                if not 0 <= eid < n:
                    raise DataFormatError(f"{index_path}:{line_no}: epoch id {eid} out of range")
                labels[eid] = lab
                domains[eid] = dom
                count += 1
            if count != n:
                raise DataFormatError(f"{index_path} lists {count} epochs, metadata promises {n}")
    except OSError as exc:
        raise DataFormatError(f"cannot read {index_path}: {exc}") from exc
    return EpochDataset(
        epochs=epochs,
        labels=labels,
        domains=domains,
        class_names=meta["class_names"],
        domain_names=meta["domain_names"],
        sampling_rate=meta["sampling_rate"],
        provenance=meta.get("provenance", ""),
    )


# ---------------------------------------------------------------------------
# embedding matrices
# ---------------------------------------------------------------------------

def load_matrix(path):
    """Headerless CSV of float rows -> (array, sidecar dict or None).

    Raises a parse error naming the offending row on NaN or malformed input.
    """
    rows = []
    width = None
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    values = [float(v) for v in line.replace(";", ",").split(",")]
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{line_no}: non-numeric entry") from exc
                if any(not np.isfinite(v) for v in values):
                    raise DataFormatError(f"{path}:{line_no}: non-finite value in row")
                if width is None:
                    width = len(values)
                elif len(values) != width:
                    raise DataFormatError(
                        f"{path}:{line_no}: row has {len(values)} columns, expected {width}"
                    )
                rows.append(values)
    except OSError as exc:
        raise DataFormatError(f"cannot read matrix {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: empty matrix")
    sidecar = None
    sidecar_path = str(path) + ".json"
    if os.path.exists(sidecar_path):
        try:
            with open(sidecar_path, encoding="utf-8") as fh:
                sidecar = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"malformed sidecar {sidecar_path}: {exc}") from exc
    return np.asarray(rows, dtype=np.float64), sidecar


def write_matrix(path, array):
    arr = np.asarray(array, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(arr):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
