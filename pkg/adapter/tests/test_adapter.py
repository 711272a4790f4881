"""Adapter round-trip tests.

Every file the adapter emits must load through the primary toolkit's own
loaders and reproduce the toolkit's score fixtures, which is what pins
byte-level format conformance.
"""

import numpy as np
import pytest
import torch

from corekit.characterize import el2n, supproto_score
from corekit.data_model import load_embeddings
from corekit.trainer import load_dynamics_csv

from corekit_adapter.cli import main as adapter_main
from corekit_adapter.export import (
    ExportManifest,
    export_dynamics,
    export_embeddings,
    export_probs,
)
from corekit_adapter.formats import read_dataset_csv

# fixture probabilities: positive rows so logits = ln(p) are finite;
# row 0 with label 1 is the sqrt(0.38) EL2N fixture
PROB_ROWS = np.array(
    [
        [0.2, 0.5, 0.3],
        [0.1, 0.8, 0.1],
        [0.6, 0.3, 0.1],
    ],
    dtype=np.float64,
)
LABELS = np.array([1, 1, 0])


class FixtureNet(torch.nn.Module):
    """Logits reproduce PROB_ROWS on one-hot inputs; embed() is a fixed map."""

    def __init__(self):
        super().__init__()
        self.classifier = torch.nn.Linear(3, 3, bias=False)
        with torch.no_grad():
            self.classifier.weight.copy_(torch.log(torch.tensor(PROB_ROWS.T, dtype=torch.float32)))
        self.embedder = torch.nn.Linear(3, 2, bias=False)
        with torch.no_grad():
            self.embedder.weight.copy_(
                torch.tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=torch.float32)
            )

    def forward(self, x):
        return self.classifier(x)

    @torch.jit.export
    def embed(self, x):
        return self.embedder(x)

    @torch.jit.export
    def embed_firstcoord(self, x):
        return x[:, :1]


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "fixture.pt"
    torch.jit.script(FixtureNet()).save(str(path))
    return path


@pytest.fixture()
def dataset_csv(tmp_path):
    # one-hot features select a PROB_ROWS row each; embed() maps sample i
    # to its first two coordinates
    path = tmp_path / "train.csv"
    rows = ["id,class,attr,f0,f1,f2"]
    features = np.eye(3)
    for i in range(3):
        rows.append(
            f"{i},{LABELS[i]},{i % 2}," + ",".join(repr(float(v)) for v in features[i])
        )
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture()
def supproto_dataset_csv(tmp_path):
    # two samples of one class whose embeddings land on (0,0) and (2,2)
    path = tmp_path / "pair.csv"
    path.write_text(
        "id,class,attr,f0,f1,f2\n"
        "0,0,0,0.0,0.0,0.0\n"
        "1,0,1,2.0,2.0,0.0\n"
    )
    return path


class TestExportProbs:
    def test_el2n_fixture_through_toolkit_loader(self, checkpoint, dataset_csv, tmp_path):
        probs_path, labels_path, manifest = export_probs(checkpoint, dataset_csv, tmp_path / "out")
        probs = load_embeddings(probs_path).values  # toolkit-side binary load
        scores = el2n(probs, LABELS)
        expected = np.linalg.norm(PROB_ROWS - np.eye(3)[LABELS], axis=1)
        np.testing.assert_allclose(scores.values, expected, atol=1e-6)
        assert scores.values[0] == pytest.approx(np.sqrt(0.38), abs=1e-6)
        assert manifest.artifacts["probs"]["records"] == 3
        labels_text = labels_path.read_text().splitlines()
        assert labels_text[0] == "id,class"
        assert [int(line.split(",")[1]) for line in labels_text[1:]] == list(LABELS)

    def test_deterministic_inference_twice_identical_files(self, checkpoint, dataset_csv, tmp_path):
        a, _, _ = export_probs(checkpoint, dataset_csv, tmp_path / "a")
        b, _, _ = export_probs(checkpoint, dataset_csv, tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()

    def test_truncated_file_fails_toolkit_load(self, checkpoint, dataset_csv, tmp_path):
        probs_path, _, _ = export_probs(checkpoint, dataset_csv, tmp_path / "out")
        probs_path.write_bytes(probs_path.read_bytes()[:-4])
        with pytest.raises(ValueError, match="length mismatch"):
            load_embeddings(probs_path)

    def test_noncanonical_dataset_order_rejected(self, checkpoint, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("id,class,attr,f0\n1,0,0,1.0\n0,1,0,2.0\n")
        with pytest.raises(ValueError, match="canonical order"):
            export_probs(checkpoint, bad, tmp_path / "out")


class TestExportEmbeddings:
    def test_round_trip_is_float32_exact(self, checkpoint, dataset_csv, tmp_path):
        emb_path, _ = export_embeddings(checkpoint, dataset_csv, tmp_path / "out")
        loaded = load_embeddings(emb_path)
        np.testing.assert_array_equal(loaded.values, np.eye(3, 2, dtype=np.float32)[[0, 1, 2]])

    def test_supproto_fixture_through_toolkit(self, checkpoint, supproto_dataset_csv, tmp_path):
        emb_path, manifest = export_embeddings(checkpoint, supproto_dataset_csv, tmp_path / "out")
        emb = load_embeddings(emb_path)
        scores = supproto_score(emb, np.array([0, 0]))
        np.testing.assert_allclose(scores.values, [np.sqrt(2), np.sqrt(2)], atol=1e-6)
        assert manifest.n == 2

    def test_layer_selector(self, checkpoint, dataset_csv, tmp_path):
        emb_path, _ = export_embeddings(
            checkpoint, dataset_csv, tmp_path / "out", layer="firstcoord"
        )
        loaded = load_embeddings(emb_path)
        assert loaded.dim == 1

    def test_missing_layer_rejected(self, checkpoint, dataset_csv, tmp_path):
        with pytest.raises(ValueError, match="no 'embed_pooled'"):
            export_embeddings(checkpoint, dataset_csv, tmp_path / "out", layer="pooled")


class TestExportDynamics:
    def test_per_epoch_checkpoints_become_correctness_log(self, dataset_csv, tmp_path):
        # epoch 0: the fixture net (argmax matches labels on rows 0..2)
        # epoch 1: a constant-zero predictor (correct only where label == 0)
        good = tmp_path / "ep0.pt"
        torch.jit.script(FixtureNet()).save(str(good))

        class Zero(torch.nn.Module):
            def forward(self, x):
                out = torch.zeros((x.shape[0], 3))
                out[:, 0] = 1.0
                return out

        zero = tmp_path / "ep1.pt"
        torch.jit.script(Zero()).save(str(zero))

        dynamics_path, manifest = export_dynamics([good, zero], dataset_csv, tmp_path / "out")
        log, ids = load_dynamics_csv(dynamics_path)  # toolkit-side load
        assert log.shape == (2, 3)
        np.testing.assert_array_equal(ids, [0, 1, 2])
        np.testing.assert_array_equal(log[0], [True, True, True])
        np.testing.assert_array_equal(log[1], LABELS == 0)
        assert manifest.artifacts["dynamics"]["records"] == 3

    def test_empty_checkpoint_list_rejected(self, dataset_csv, tmp_path):
        with pytest.raises(ValueError, match="at least one"):
            export_dynamics([], dataset_csv, tmp_path / "out")


class TestManifest:
    def test_record_count_mismatch_rejected(self, tmp_path):
        manifest = ExportManifest(dataset="d", n=5)
        path = tmp_path / "x.ssf"
        path.write_bytes(b"12345")
        with pytest.raises(ValueError, match="declares 5"):
            manifest.add("probs", path, records=3)

    def test_checksums_cover_file_bytes(self, checkpoint, dataset_csv, tmp_path):
        import hashlib

        probs_path, _, manifest = export_probs(checkpoint, dataset_csv, tmp_path / "out")
        entry = manifest.artifacts["probs"]
        assert entry["sha256"] == hashlib.sha256(probs_path.read_bytes()).hexdigest()

    def test_load_validates_counts(self, checkpoint, dataset_csv, tmp_path):
        out = tmp_path / "out"
        export_probs(checkpoint, dataset_csv, out)
        manifest_path = out / "manifest.json"
        loaded = ExportManifest.load(manifest_path)
        assert loaded.n == 3
        tampered = manifest_path.read_text().replace('"records": 3', '"records": 7')
        manifest_path.write_text(tampered)
        with pytest.raises(ValueError, match="records"):
            ExportManifest.load(manifest_path)


class TestCli:
    def test_probs_embeddings_dynamics_commands(self, checkpoint, dataset_csv, tmp_path, capsys):
        out = tmp_path / "cli"
        assert adapter_main(
            ["probs", "--checkpoint", str(checkpoint), "--dataset", str(dataset_csv), "--out", str(out / "p")]
        ) == 0
        assert adapter_main(
            ["embeddings", "--checkpoint", str(checkpoint), "--dataset", str(dataset_csv), "--out", str(out / "e")]
        ) == 0
        assert adapter_main(
            [
                "dynamics",
                "--epoch-checkpoints", str(checkpoint), str(checkpoint),
                "--dataset", str(dataset_csv),
                "--out", str(out / "d"),
            ]
        ) == 0
        assert (out / "p" / "probs.emb").exists()
        assert (out / "e" / "embeddings_penultimate.emb").exists()
        assert (out / "d" / "dynamics.csv").exists()
        capsys.readouterr()

    def test_failure_exits_nonzero(self, checkpoint, tmp_path, capsys):
        missing = tmp_path / "missing.csv"
        assert adapter_main(
            ["probs", "--checkpoint", str(checkpoint), "--dataset", str(missing), "--out", str(tmp_path)]
        ) == 1
        capsys.readouterr()


def test_acceptance_criterion_11(checkpoint, dataset_csv, supproto_dataset_csv, tmp_path, capsys):
    """Adapter round-trip: exported files reproduce the toolkit fixtures."""
    probs_path, _, _ = export_probs(checkpoint, dataset_csv, tmp_path / "p")
    el2n_value = el2n(load_embeddings(probs_path).values, LABELS).values[0]
    emb_path, _ = export_embeddings(checkpoint, supproto_dataset_csv, tmp_path / "e")
    proto_values = supproto_score(load_embeddings(emb_path), np.array([0, 0])).values
    ok = abs(el2n_value - np.sqrt(0.38)) <= 1e-6 and np.allclose(
        proto_values, np.sqrt(2), atol=1e-6
    )
    status = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(
            f"[{status}] criterion 11 (adapter round-trip): el2n={el2n_value:.8f} "
            f"(sqrt(0.38)={np.sqrt(0.38):.8f}), supproto={proto_values[0]:.8f} "
            f"(sqrt(2)={np.sqrt(2):.8f}), both at 1e-6",
            flush=True,
        )
    assert ok
