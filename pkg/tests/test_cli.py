import json

import numpy as np
import pytest

from flowdag import graphio, linalg
from flowdag.cli import main
from flowdag.sachs import SACHS_EDGES, load_sachs_ground_truth

from conftest import check_dot_syntax

FAST_FLAGS = [
    "--num-blocks", "2", "--hidden-sizes", "8", "--inner-steps", "20",
    "--batch-size", "64", "--jacobian-batch", "64", "--max-outer-iters", "2",
]


class TestGraphIO:
    def test_dataset_csv_round_trip_bitwise(self, rng, tmp_path):
        data = rng.standard_normal((20, 4))
        path = tmp_path / "d.csv"
        graphio.write_dataset_csv(path, data)
        loaded, names = graphio.read_dataset_csv(path)
        assert np.array_equal(loaded, data)
        assert names == ["X1", "X2", "X3", "X4"]

    def test_malformed_csv_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="row 3"):
            graphio.read_dataset_csv(path)
        path.write_text("a,b\n1.0,oops\n")
        with pytest.raises(ValueError, match="row 2"):
            graphio.read_dataset_csv(path)

    def test_adjacency_csv_round_trip(self, rng, tmp_path):
        w = np.abs(rng.standard_normal((3, 3)))
        path = tmp_path / "w.csv"
        graphio.write_adjacency_csv(path, w, ["a", "b", "c"])
        loaded, names = graphio.read_adjacency_csv(path)
        assert np.array_equal(loaded, w)
        assert names == ["a", "b", "c"]

    def test_edge_list_round_trip(self, tmp_path):
        g = np.zeros((3, 3), dtype=bool)
        g[0, 2] = g[1, 0] = True
        path = tmp_path / "e.txt"
        graphio.write_edge_list(path, g, ["n1", "n2", "n3"])
        edges = graphio.read_edge_list(path)
        assert graphio.edges_to_graph(edges, ["n1", "n2", "n3"]).tolist() == g.tolist()

    def test_edge_list_rejects_garbage(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("a b c\n")
        with pytest.raises(ValueError, match="src dst"):
            graphio.read_edge_list(path)


class TestEmitDot:
    def test_empty_graph_has_nodes_only(self):
        text = graphio.emit_dot(np.zeros((2, 2), dtype=bool), ["u", "v"])
        check_dot_syntax(text)
        assert '"u";' in text and '"v";' in text
        assert "->" not in text

    def test_new_edge_is_blue(self):
        prev = np.zeros((2, 2), dtype=bool)
        cur = prev.copy()
        cur[0, 1] = True
        text = graphio.emit_dot(cur, ["u", "v"], diff_vs_previous=prev)
        check_dot_syntax(text)
        assert '"u" -> "v" [color=blue];' in text

    def test_removed_edge_is_red_dashed(self):
        prev = np.zeros((2, 2), dtype=bool)
        prev[1, 0] = True
        cur = np.zeros((2, 2), dtype=bool)
        text = graphio.emit_dot(cur, ["u", "v"], diff_vs_previous=prev)
        check_dot_syntax(text)
        assert '"v" -> "u" [color=red, style=dashed];' in text
        plain = graphio.emit_dot(cur, ["u", "v"], diff_vs_previous=prev,
                                 include_removed=False)
        assert "->" not in plain

    def test_persistent_edges_plain(self):
        g = np.zeros((2, 2), dtype=bool)
        g[0, 1] = True
        text = graphio.emit_dot(g, ["u", "v"], diff_vs_previous=g)
        assert '"u" -> "v";' in text


class TestSachsGroundTruth:
    def test_seventeen_edges(self):
        graph, names = load_sachs_ground_truth()
        assert int(graph.sum()) == 17
        assert len(names) == 11

    def test_reported_true_positives_are_members(self):
        edge_set = set(SACHS_EDGES)
        for edge in [("Raf", "Mek"), ("Plcg", "PIP2"), ("PIP3", "PIP2"),
                     ("Erk", "Akt"), ("PKC", "Mek"), ("PKC", "P38")]:
            assert edge in edge_set

    def test_acyclic(self):
        graph, _ = load_sachs_ground_truth()
        assert linalg.is_acyclic(graph)


class TestSynthCommand:
    def test_writes_dataset_and_truth(self, tmp_path):
        out = tmp_path / "run"
        code = main(["synth", "--d", "4", "--edges-per-node", "1", "--n", "50",
                     "--seed", "3", "--out", str(out)])
        assert code == 0
        data, names = graphio.read_dataset_csv(out / "data.csv")
        assert data.shape == (50, 4)
        truth = graphio.edges_to_graph(graphio.read_edge_list(out / "truth_edges.txt"), names)
        assert linalg.is_acyclic(truth)

    def test_round_trip_bitwise_with_generator(self, tmp_path):
        from flowdag import synth

        out = tmp_path / "run"
        main(["synth", "--d", "3", "--n", "30", "--seed", "7", "--out", str(out)])
        expected = synth.simulate_sem(
            synth.ground_truth_for(synth.sample_er_dag(3, 1.0, seed=7), "gp"), 30, seed=7)
        data, _ = graphio.read_dataset_csv(out / "data.csv")
        assert np.array_equal(data, expected)


class TestFitCommand:
    def test_full_artifact_set(self, rng, tmp_path):
        data_path = tmp_path / "toy.csv"
        graphio.write_dataset_csv(data_path, rng.standard_normal((80, 3)), ["a", "b", "c"])
        truth_path = tmp_path / "truth.txt"
        truth_path.write_text("a b\nb c\n")
        out = tmp_path / "run"
        code = main(["fit", "--data", str(data_path), "--truth", str(truth_path),
                     "--out", str(out), "--seed", "1"] + FAST_FLAGS)
        assert code == 0
        for artifact in ("config.json", "train_log.txt", "adjacency.csv", "edges.txt",
                         "final.dot", "model.npz", "metrics.json", "snapshot_1.dot"):
            assert (out / artifact).exists(), artifact
        check_dot_syntax((out / "final.dot").read_text())
        check_dot_syntax((out / "snapshot_1.dot").read_text())
        report = json.loads((out / "metrics.json").read_text())
        assert set(report) >= {"shd", "shd_cost1", "tpr", "counts"}
        config_echo = json.loads((out / "config.json").read_text())
        assert config_echo["train"]["inner_steps"] == 20
        # edge list references the header names
        for src, dst in graphio.read_edge_list(out / "edges.txt"):
            assert src in ("a", "b", "c") and dst in ("a", "b", "c")

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = main(["fit", "--data", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o")] + FAST_FLAGS)
        assert code == 3
        assert "bad input" in capsys.readouterr().err

    def test_malformed_csv_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1.0,x\n")
        code = main(["fit", "--data", str(bad), "--out", str(tmp_path / "o")] + FAST_FLAGS)
        assert code == 3
        assert "row 2" in capsys.readouterr().err

    def test_config_file_and_flag_override(self, rng, tmp_path):
        data_path = tmp_path / "toy.csv"
        graphio.write_dataset_csv(data_path, rng.standard_normal((60, 3)))
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(
            "train:\n  num_blocks: 2\n  hidden_sizes: [8]\n  inner_steps: 999\n"
            "  batch_size: 64\n  jacobian_batch: 64\n  max_outer_iters: 1\n"
        )
        out = tmp_path / "run"
        code = main(["fit", "--data", str(data_path), "--out", str(out),
                     "--config", str(cfg_path), "--inner-steps", "5"])
        assert code == 0
        echo = json.loads((out / "config.json").read_text())
        assert echo["train"]["inner_steps"] == 5       # flag beats file
        assert echo["train"]["num_blocks"] == 2        # file beats default

    def test_unknown_config_key_rejected(self, rng, tmp_path, capsys):
        data_path = tmp_path / "toy.csv"
        graphio.write_dataset_csv(data_path, rng.standard_normal((30, 3)))
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text("learning_rte: 0.1\n")
        code = main(["fit", "--data", str(data_path), "--out", str(tmp_path / "o"),
                     "--config", str(cfg_path)])
        assert code == 3
        assert "unknown config keys" in capsys.readouterr().err


class TestEvalCommand:
    def test_metrics_json(self, tmp_path, capsys):
        (tmp_path / "pred.txt").write_text("a b\nc b\n")
        (tmp_path / "truth.txt").write_text("a b\nb c\n")
        out = tmp_path / "m.json"
        code = main(["eval", "--pred", str(tmp_path / "pred.txt"),
                     "--truth", str(tmp_path / "truth.txt"), "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["counts"]["tp"] == 1
        assert report["counts"]["reversed"] == 1
        assert report["shd"] == 2


class TestBenchmarkCommand:
    def test_two_seed_structure(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["benchmark", "--d", "3", "--n", "60", "--seeds", "0,1",
                     "--out", str(out)] + FAST_FLAGS)
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["num_seeds"] == 2
        assert len(summary["per_seed"]) == 2
        assert "±" in summary["cells"]["shd"]
        for seed in (0, 1):
            assert (out / f"seed_{seed}" / "metrics.json").exists()
        text = (out / "summary.txt").read_text()
        assert text.count("seed=") == 2

    def test_single_seed_sd_is_zero(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["benchmark", "--d", "3", "--n", "60", "--seeds", "5",
                     "--out", str(out)] + FAST_FLAGS)
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["shd_sd"] == 0.0
        assert summary["tpr_sd"] == 0.0
