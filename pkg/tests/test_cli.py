import json
from pathlib import Path

import pytest

from bracelab.cli import main
from bracelab.economy import build_economy, economy_to_spec
from bracelab.scenarios import example_one_economy


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def economy_file(tmp_path):
    path = tmp_path / "economy.json"
    path.write_text(json.dumps(economy_to_spec(example_one_economy())))
    return path


class TestSolveCommand:
    def test_canonical_solve_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert run(["solve", "--economy", "canonical", "--seed", 7, "--out-dir", out]) == 0
        assert (out / "solve.csv").exists()
        assert (out / "solve.json").exists()
        assert (out / "solve.png").exists()
        payload = json.loads((out / "solve.json").read_text())
        prices = payload["result"]["prices"]
        assert all(abs(p - 0.25) <= 0.1 for p in prices)

    def test_economy_file_roundtrip(self, tmp_path, economy_file):
        out = tmp_path / "run"
        assert run(["solve", "--economy", economy_file, "--seed", 3, "--out-dir", out]) == 0

    def test_missing_file_exits_nonzero(self, tmp_path):
        assert run(["solve", "--economy", tmp_path / "nope.json", "--seed", 1,
                    "--out-dir", tmp_path]) == 2

    def test_malformed_spec_exits_nonzero(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"goods\": []}")
        assert run(["solve", "--economy", bad, "--seed", 1, "--out-dir", tmp_path]) == 2

    def test_csv_has_seed_and_hash_columns(self, tmp_path):
        out = tmp_path / "run"
        run(["solve", "--economy", "canonical", "--seed", 7, "--out-dir", out])
        header = (out / "solve.csv").read_text().splitlines()[0].split(",")
        assert "seed" in header and "config_hash" in header


class TestAttackCommand:
    def test_empty_attack_gain_zero(self, tmp_path):
        out = tmp_path / "run"
        assert run(["attack", "run", "--economy", "canonical", "--attack", "empty",
                    "--seed", 5, "--out-dir", out, "--max-iter", 500]) == 0
        rows = (out / "attack.csv").read_text().splitlines()
        fields = dict(zip(rows[0].split(","), rows[1].split(",")))
        assert float(fields["reported_rank_gain"]) == 0.0
        assert float(fields["alpha"]) == 0.0

    def test_canonical_split(self, tmp_path):
        out = tmp_path / "run"
        assert run(["attack", "run", "--economy", "canonical", "--attack", "canonical-split",
                    "--seed", 5, "--out-dir", out, "--max-iter", 500]) == 0
        payload = json.loads((out / "attack.json").read_text())
        assert payload["reported_rank_gain"] > 0
        assert payload["attacked"]["prices"][1] > payload["base"]["prices"][1]

    def test_attack_spec_file(self, tmp_path, economy_file):
        attack = tmp_path / "attack.json"
        attack.write_text(json.dumps({
            "kind": "misreport",
            "principal": "P",
            "retyping": {
                "1": {
                    "acceptable": [[1, 0, 0, 0], [1, 1, 0, 0]],
                    "order": [[[1, 1, 0, 0]], [[1, 0, 0, 0]]],
                }
            },
        }))
        out = tmp_path / "run"
        assert run(["attack", "run", "--economy", economy_file, "--attack", attack,
                    "--seed", 5, "--out-dir", out, "--max-iter", 500]) == 0


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run(["attack", "run", "--economy", "canonical", "--attack", "canonical-split",
                        "--seed", 11, "--out-dir", out, "--max-iter", 500]) == 0
        for name in ("attack.csv", "attack.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_different_seeds_recorded(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(["solve", "--economy", "canonical", "--seed", 1, "--out-dir", out1])
        run(["solve", "--economy", "canonical", "--seed", 2, "--out-dir", out2])
        r1 = (out1 / "solve.csv").read_text()
        r2 = (out2 / "solve.csv").read_text()
        assert r1 != r2  # seed column differs


class TestCorpusCommand:
    def test_generates_manifest_and_files(self, tmp_path):
        out = tmp_path / "corp"
        assert run(["corpus", "--count", 4, "--n", 10, "--seed", 3, "--out-dir", out]) == 0
        assert (out / "corpus_manifest.csv").exists()
        specs = sorted(out.glob("economy_*.json"))
        assert len(specs) == 4
        for f in specs:
            build_economy(json.loads(f.read_text()))


class TestFairnessCommand:
    def test_check_on_canonical(self, tmp_path):
        out = tmp_path / "run"
        assert run(["fairness", "check", "--economy", "canonical", "--seed", 2,
                    "--out-dir", out]) == 0
        assert (out / "fairness.csv").exists()

    def test_lift_search(self, tmp_path):
        out = tmp_path / "run"
        assert run(["fairness", "lift-search", "--seed", 2, "--out-dir", out]) == 0
        payload = json.loads((out / "lift_search.json").read_text())
        assert payload["found"] is True


class TestNonexistenceCommand:
    def test_audit_output(self, tmp_path):
        out = tmp_path / "run"
        assert run(["nonexistence", "--economy", "canonical", "--schedule", "1,2,3,4",
                    "--beta", 0.5, "--good", 0, "--principal", "P",
                    "--seed", 2, "--out-dir", out, "--max-iter", 300]) == 0
        payload = json.loads((out / "nonexistence.json").read_text())
        assert payload["first_violation"] == 3
