"""Export model outputs into toolkit-consumable files.

A checkpoint is a TorchScript module (or any object with the same
surface): ``forward(features) -> logits`` is required; embedding export
additionally needs an ``embed`` method returning the penultimate-layer
activations, or ``embed_<layer>`` for another named layer (e.g. a BERT
pooled output vs. a CLS hidden state). The adapter only moves numbers
into files; every score is computed by the toolkit itself so there is a
single scored implementation to test.

All exports follow the canonical sample order of the dataset CSV and are
summarized in an ExportManifest JSON with a sha256 checksum per file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .formats import (
    read_dataset_csv,
    write_dynamics_csv,
    write_emb,
    write_labels_csv,
)


@dataclass
class ExportManifest:
    """Inventory of emitted files; declared n must match every record count."""

    dataset: str
    n: int
    artifacts: dict = field(default_factory=dict)

    def add(self, kind: str, path, records: int) -> None:
        if records != self.n:
            raise ValueError(
                f"{kind} holds {records} records but the dataset declares {self.n}"
            )
        path = Path(path)
        self.artifacts[kind] = {
            "path": path.name,
            "records": records,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        }

    def write(self, path) -> None:
        payload = {"dataset": self.dataset, "n": self.n, "artifacts": self.artifacts}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExportManifest":
        payload = json.loads(Path(path).read_text())
        manifest = cls(dataset=payload["dataset"], n=int(payload["n"]))
        manifest.artifacts = payload["artifacts"]
        for kind, entry in manifest.artifacts.items():
            if int(entry["records"]) != manifest.n:
                raise ValueError(
                    f"manifest {path}: artifact {kind} declares {entry['records']} "
                    f"records for n={manifest.n}"
                )
        return manifest


def load_model(checkpoint):
    """A TorchScript file path, or any object already exposing the protocol."""
    if hasattr(checkpoint, "forward"):
        return checkpoint
    return torch.jit.load(str(checkpoint), map_location="cpu")


def _eval_mode(model):
    if hasattr(model, "eval"):
        model.eval()
    return model


def _to_numpy(tensor) -> np.ndarray:
    if isinstance(tensor, torch.Tensor):
        return tensor.detach().cpu().numpy()
    return np.asarray(tensor)


def _forward_probs(model, features: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        logits = _to_numpy(model.forward(torch.from_numpy(features)))
    if logits.ndim != 2 or logits.shape[0] != features.shape[0]:
        raise ValueError(f"model returned logits of shape {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def export_probs(checkpoint, dataset_csv, out_dir, dataset_name: str | None = None):
    """Write softmax probabilities (EMB v1 n x C table) plus a labels CSV.

    The probability table uses the toolkit's matrix container so it loads
    through the same binary loader as score and embedding files.
    """
    features, class_labels, _ = read_dataset_csv(dataset_csv)
    model = _eval_mode(load_model(checkpoint))
    probs = _forward_probs(model, features)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probs_path = out_dir / "probs.emb"
    labels_path = out_dir / "labels.csv"
    write_emb(probs_path, probs)
    write_labels_csv(labels_path, class_labels)
    manifest = ExportManifest(
        dataset=dataset_name or Path(dataset_csv).stem, n=features.shape[0]
    )
    manifest.add("probs", probs_path, probs.shape[0])
    manifest.add("labels", labels_path, len(class_labels))
    manifest.write(out_dir / "manifest.json")
    return probs_path, labels_path, manifest


def export_embeddings(
    checkpoint, dataset_csv, out_dir, layer: str = "penultimate", dataset_name: str | None = None
):
    """Write per-sample embeddings from the named layer as an EMB v1 file.

    ``penultimate`` uses the model's ``embed`` method; any other name is
    looked up as ``embed_<layer>`` so checkpoints can expose several
    extraction points.
    """
    features, _, _ = read_dataset_csv(dataset_csv)
    model = _eval_mode(load_model(checkpoint))
    method_name = "embed" if layer == "penultimate" else f"embed_{layer}"
    extract = getattr(model, method_name, None)
    if extract is None:
        raise ValueError(
            f"checkpoint has no '{method_name}' method for layer {layer!r}"
        )
    with torch.no_grad():
        emb = _to_numpy(extract(torch.from_numpy(features)))
    if emb.ndim != 2 or emb.shape[0] != features.shape[0]:
        raise ValueError(f"layer {layer!r} produced shape {emb.shape}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emb_path = out_dir / f"embeddings_{layer}.emb"
    write_emb(emb_path, emb)
    manifest = ExportManifest(
        dataset=dataset_name or Path(dataset_csv).stem, n=features.shape[0]
    )
    manifest.add("embeddings", emb_path, emb.shape[0])
    manifest.write(out_dir / "manifest.json")
    return emb_path, manifest


def export_dynamics(epoch_checkpoints, dataset_csv, out_dir, dataset_name: str | None = None):
    """Evaluate one checkpoint per epoch and write the correctness log CSV."""
    checkpoints = list(epoch_checkpoints)
    if not checkpoints:
        raise ValueError("dynamics export needs at least one epoch checkpoint")
    features, class_labels, _ = read_dataset_csv(dataset_csv)
    rows = []
    for checkpoint in checkpoints:
        model = _eval_mode(load_model(checkpoint))
        probs = _forward_probs(model, features)
        rows.append(np.argmax(probs, axis=1) == class_labels)
    correctness = np.stack(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dynamics_path = out_dir / "dynamics.csv"
    write_dynamics_csv(dynamics_path, correctness)
    manifest = ExportManifest(
        dataset=dataset_name or Path(dataset_csv).stem, n=features.shape[0]
    )
    manifest.add("dynamics", dynamics_path, correctness.shape[1])
    manifest.write(out_dir / "manifest.json")
    return dynamics_path, manifest
