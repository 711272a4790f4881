"""corekit-adapter: bridge trained checkpoints to corekit file formats."""

__version__ = "0.1.0"

from .export import (
    ExportManifest,
    export_dynamics,
    export_embeddings,
    export_probs,
    load_model,
)
from .formats import (
    read_dataset_csv,
    write_dynamics_csv,
    write_emb,
    write_labels_csv,
    write_ssf,
)

__all__ = [
    "ExportManifest",
    "export_dynamics",
    "export_embeddings",
    "export_probs",
    "load_model",
    "read_dataset_csv",
    "write_dynamics_csv",
    "write_emb",
    "write_labels_csv",
    "write_ssf",
]
