import json

import numpy as np
import pytest

from fewslot.cli import main
from fewslot.data import (read_collection, subset_by_labels, validate_collection,
                          write_collection)
from fewslot.synth import make_synthetic_collection


def run(*argv):
    return main(list(argv))


class TestSynth:
    def test_shape_contract(self, tmp_path):
        out = tmp_path / "c.jsonl"
        assert run("synth", "--classes", "10", "--dim", "32", "--separation", "4.0",
                   "--values-per-class", "50", "--seed", "7", "--out", str(out)) == 0
        coll = read_collection(out)
        assert len(coll.label_index) == 10
        assert all(len(v) == 50 for v in coll.label_index.values())
        assert coll.manifest.embedder == "synthetic"
        assert coll.manifest.dimension == 32

    def test_same_flags_identical_bytes(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        for out in (a, b):
            run("synth", "--classes", "3", "--dim", "4", "--values-per-class", "5",
                "--seed", "9", "--out", str(out))
        assert a.read_bytes() == b.read_bytes()

    def test_zero_separation_clusters_coincide(self, tmp_path):
        out = tmp_path / "c.jsonl"
        run("synth", "--classes", "4", "--dim", "8", "--separation", "0",
            "--values-per-class", "20", "--seed", "1", "--out", str(out))
        coll = read_collection(out)
        means = [np.mean([t.vector for t in coll.triplets if t.label == lab], axis=0)
                 for lab in coll.labels()]
        # all class means near the origin
        assert max(np.linalg.norm(m) for m in means) < 1.0


class TestValidate:
    def test_valid_collection_exit_zero(self, tmp_path, capsys):
        coll = make_synthetic_collection(3, 4, 1.0, 5, seed=0)
        path = tmp_path / "c.jsonl"
        write_collection(coll, path)
        assert run("validate", "--collection", str(path)) == 0
        assert "violations: 0" in capsys.readouterr().out

    def test_missing_file_exit_nonzero(self, tmp_path, capsys):
        assert run("validate", "--collection", str(tmp_path / "nope.jsonl")) == 1
        assert "error:" in capsys.readouterr().err


class TestSplit:
    def make_corpus(self, tmp_path, domains=3, labels_per=2, per_label=12, dim=6):
        corpus = tmp_path / "corpus"
        base = make_synthetic_collection(domains * labels_per, dim, 2.0,
                                         per_label, seed=3)
        names = base.labels()
        for d in range(domains):
            sub = subset_by_labels(base, names[d * labels_per:(d + 1) * labels_per])
            sub.manifest.domains = [f"dom{d}"]
            write_collection(sub, corpus / f"dom{d}.jsonl")
        return corpus

    def test_split_writes_one_dir_per_domain(self, tmp_path):
        corpus = self.make_corpus(tmp_path)
        out = tmp_path / "splits"
        assert run("split", "--corpus-dir", str(corpus), "--out", str(out),
                   "--size", "5", "--size", "10", "--seed", "1") == 0
        dirs = sorted(p.name for p in out.iterdir())
        assert dirs == ["split_dom0", "split_dom1", "split_dom2"]
        entry = json.loads((out / "split_dom0" / "split.json").read_text())
        assert entry["train_domains"] == ["dom1", "dom2"]
        assert set(entry["train"]) == {"5", "10"}
        train = read_collection(out / "split_dom0" / entry["train"]["5"])
        test = read_collection(out / "split_dom0" / entry["test"])
        assert validate_collection(train).ok and validate_collection(test).ok
        assert not set(train.label_index) & set(test.label_index)
        assert all(len(v) == 5 for v in train.label_index.values())

    def test_split_deterministic(self, tmp_path):
        corpus = self.make_corpus(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            run("split", "--corpus-dir", str(corpus), "--out", str(out),
                "--size", "5", "--seed", "1")
        file_a = out_a / "split_dom0" / "train_5.jsonl"
        file_b = out_b / "split_dom0" / "train_5.jsonl"
        assert file_a.read_bytes() == file_b.read_bytes()


@pytest.fixture(scope="module")
def synth_pair(tmp_path_factory):
    root = tmp_path_factory.mktemp("traincli")
    coll = make_synthetic_collection(8, 6, 3.0, 12, seed=5)
    names = coll.labels()
    train_path = root / "train.jsonl"
    test_path = root / "test.jsonl"
    write_collection(subset_by_labels(coll, names[:5]), train_path)
    write_collection(subset_by_labels(coll, names[5:]), test_path)
    return train_path, test_path


class TestTrainEvalCli:
    def test_train_twice_byte_identical(self, synth_pair, tmp_path):
        train_path, test_path = synth_pair
        outs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            code = run("train", "--model", "prototypical",
                       "--collection", str(train_path),
                       "--test-collection", str(test_path),
                       "--c-way", "3", "--k-shot", "2",
                       "--train-episodes", "30", "--eval-every", "15",
                       "--eval-episodes", "3", "--seed", "11", "--out", str(out))
            assert code == 0
            outs.append(out)
        for fname in ("checkpoint.json", "loss_curve.csv", "eval_run.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_eval_checkpoint(self, synth_pair, tmp_path):
        train_path, test_path = synth_pair
        train_out = tmp_path / "train"
        run("train", "--model", "matching", "--collection", str(train_path),
            "--c-way", "3", "--k-shot", "2", "--train-episodes", "10",
            "--eval-every", "5", "--eval-episodes", "2", "--seed", "2",
            "--out", str(train_out))
        eval_out = tmp_path / "eval"
        code = run("eval", "--checkpoint", str(train_out / "checkpoint.json"),
                   "--test-collection", str(test_path), "--c-way", "3",
                   "--k-shot", "2", "--eval-episodes", "4", "--seed", "3",
                   "--out", str(eval_out))
        assert code == 0
        lines = (eval_out / "eval_run.csv").read_text().splitlines()
        assert lines[0] == "step,accuracy"
        assert lines[-1].startswith("final,")

    def test_loss_curve_format(self, synth_pair, tmp_path):
        train_path, _ = synth_pair
        out = tmp_path / "fmt"
        run("train", "--model", "prototypical", "--collection", str(train_path),
            "--c-way", "2", "--k-shot", "2", "--train-episodes", "4",
            "--eval-every", "4", "--eval-episodes", "1", "--seed", "1",
            "--out", str(out))
        lines = (out / "loss_curve.csv").read_text().splitlines()
        assert lines[0] == "episode,loss"
        assert len(lines) == 5
        assert lines[1].startswith("1,")


class TestGridCli:
    def test_grid_runs_and_reports(self, synth_pair, tmp_path):
        train_path, test_path = synth_pair
        spec = {
            "domains": ["synthetic"], "embedders": ["synthetic"],
            "models": ["matching", "prototypical"], "k_shots": [2],
            "sizes": [12], "c_way": 3,
            "train_episodes": 10, "eval_every": 10, "eval_episodes": 2,
            "seed": 4,
            "collections": {
                "train": {f"synthetic|synthetic|12": str(train_path)},
                "test": {"synthetic|synthetic": str(test_path)},
            },
        }
        spec_path = tmp_path / "grid.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "grid_out"
        assert run("grid", "--grid-spec", str(spec_path), "--out", str(out)) == 0
        csv_text = (out / "grid.csv").read_text()
        assert csv_text.splitlines()[0] == "domain,embedder,model,k_shot,accuracy"
        assert len(csv_text.splitlines()) == 3
        assert "## synthetic" in (out / "grid.md").read_text()

    def test_grid_missing_collection_continues(self, synth_pair, tmp_path):
        train_path, test_path = synth_pair
        spec = {
            "domains": ["synthetic"], "embedders": ["synthetic"],
            "models": ["matching"], "k_shots": [2], "sizes": [12, 99],
            "c_way": 3, "train_episodes": 4, "eval_every": 4,
            "eval_episodes": 1, "seed": 4,
            "collections": {
                "train": {"synthetic|synthetic|12": str(train_path),
                          "synthetic|synthetic|99": str(tmp_path / "missing.jsonl")},
                "test": {"synthetic|synthetic": str(test_path)},
            },
        }
        spec_path = tmp_path / "grid.json"
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / "gridmiss"
        assert run("grid", "--grid-spec", str(spec_path), "--out", str(out)) == 0
        assert "synthetic,synthetic,matching,2," in (out / "grid.csv").read_text()


class TestHelp:
    @pytest.mark.parametrize("cmd", ["validate", "split", "train", "eval",
                                     "grid", "synth"])
    def test_help_documents_flags(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            run(cmd, "--help")
        assert exc.value.code == 0
        text = capsys.readouterr().out
        if cmd == "train":
            for flag in ("--collection", "--test-collection", "--model", "--c-way",
                         "--k-shot", "--train-episodes", "--eval-every",
                         "--eval-episodes", "--seed", "--out"):
                assert flag in text
            assert "default: 10000" in text
            assert "default: 500" in text
            assert "default: 1000" in text
