import os
import pathlib

import numpy as np
import pytest

import magnn

TOY = pathlib.Path(os.environ.get("MAGNN_SOURCE_DIR", pathlib.Path(__file__).parents[2])) / "data" / "toy" / "schema.json"


def small(**kw):
    cfg = dict(hidden_dim=4, attn_dim=4, heads=2, epochs=5, patience=5, probe_runs=2)
    cfg.update(kw)
    return cfg


def test_metrics():
    assert magnn.roc_auc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert magnn.roc_auc([0.5] * 3, [0.5] * 3) == 0.5
    assert magnn.average_precision([0.9, 0.6], [0.8, 0.3]) == pytest.approx(0.5 + 1 / 3)
    assert magnn.ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert magnn.nmi([0, 0, 1, 1], [0, 0, 0, 0]) == 0.0
    macro, micro = magnn.f1_scores([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0], 3)
    assert micro == pytest.approx(4 / 6)
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
    labels = magnn.kmeans(pts, 2, seed=1)
    assert labels[0] == labels[1] != labels[2] == labels[3]


def test_toy_dataset_and_enumeration():
    data, warnings = magnn.load_dataset(str(TOY))
    assert warnings == []
    assert data.node_types == ["A", "B", "C"]
    assert data.node_counts == [10, 3, 2]
    t = magnn.enumerate_instances(data, "A-B-A")
    assert t["instances"].shape[1] == 3
    assert len(t["offsets"]) == len(t["targets"]) + 1
    assert t["offsets"][-1] == t["instances"].shape[0]


def test_classify_pipeline_on_synthetic_graph():
    data = magnn.synth_hetgraph(movies=60, directors=10, actors=30, p_in=0.3, p_out=0.01, seed=2)
    res = magnn.run_pipeline(data, **small(metapaths=["M-D-M", "M-A-M"], target="M", train_fractions=[0.5]))
    assert res["embeddings"].shape == (60, 3)
    assert np.allclose(res["embeddings"].sum(axis=1), 1.0)
    assert res["nodes"][0] == ("M", 0)
    report = res["reports"][0]
    assert report["task"] == "classify" and report["train_fraction"] == 0.5
    assert 0.0 <= report["metrics"]["macro_f1"] <= 1.0
    assert len(res["training"]["train_loss"]) == 5


def test_linkpred_and_determinism():
    data = magnn.synth_bipartite(users=40, artists=40, blocks=2, seed=1)
    cfg = small(task="linkpred", metapaths=["U-A-U", "A-U-A"], link_relation="U-A", out_dim=4)
    a = magnn.run_pipeline(data, **cfg)
    b = magnn.run_pipeline(data, **cfg)
    assert np.array_equal(a["embeddings"], b["embeddings"])
    assert 0.0 <= a["reports"][0]["metrics"]["auc"] <= 1.0


def test_run_writes_artifacts(tmp_path):
    res = magnn.run(**small(schema=str(TOY), metapaths=["A-B-A"], target="A", train_fractions=[0.5],
                            output_dir=str(tmp_path)))
    assert (tmp_path / "embeddings.txt").read_text().splitlines()[0] == "10 2"
    assert res["nodes"][0] == ("A", 0)


def test_errors():
    data = magnn.synth_hetgraph(movies=30, directors=5, actors=5)
    with pytest.raises(magnn.ConfigError):
        magnn.run_pipeline(data, metapaths=["M-V"], target="M")
    with pytest.raises(magnn.ConfigError):
        magnn.run_pipeline(data, not_a_field=1)
    with pytest.raises(magnn.DataError):
        magnn.load_dataset("/nonexistent/schema.json")
    assert issubclass(magnn.ConfigError, magnn.Error)
    assert magnn.default_config()["learning_rate"] == 0.005
