import hashlib
import json
import math

import numpy as np
import pytest

from disot.cli import main
from disot.errors import ParseError, TooLarge
from disot.instances import generate_instance
from disot.io import (
    dump_text,
    dumps,
    load_csv_measure,
    load_instance,
    parse_instance,
    report_to_csv,
    save_document,
)

TWO_DIRAC_DOC = {
    "base": [{"id": "w", "sigma": 1.0}],
    "fibers": {
        "w": {
            "points": [0.0, 2.0],
            "cost": [[0.0, 2.0], [2.0, 0.0]],
            "measures": {
                "mu": [{"point": 0, "w": 1.0}],
                "nu": [{"point": 1, "w": 1.0}],
            },
        }
    },
}

# frozen hash of generate_instance(seed=0, 2 fibers x 3 atoms); determinism golden
GOLDEN_SHA256 = "39a49a36b14ed9a4001feebfd7ccb12a04b0f0426fabcaed1b7d4db77f078d29"


class TestIO:
    def test_instance_roundtrip(self, tmp_path):
        path = tmp_path / "inst.json"
        save_document(str(path), TWO_DIRAC_DOC)
        inst = load_instance(str(path))
        assert inst.base_ids == ("w",)
        assert inst.measure("mu").fiber("w").as_dict() == {0: 1.0}
        assert inst.bundle.cost("w").d[0, 1] == 2.0

    def test_shared_fiber_schema_with_relabeling(self, tmp_path):
        doc = {
            "base": [{"id": "a", "sigma": 0.5}, {"id": "b", "sigma": 0.5}],
            "points": [0.0, 1.0],
            "cost": [[0.0, 1.0], [1.0, 0.0]],
            "relabelings": {"b": [1, 0]},
            "fibers": {
                "a": {"measures": {"m": [{"point": 0, "w": 1.0}]}},
                "b": {"measures": {"m": [{"point": 1, "w": 1.0}]}},
            },
        }
        inst = parse_instance(doc)
        assert inst.bundle.shared_fiber
        assert inst.bundle.relabel("b", 0) == 1
        assert inst.measure("m").fiber("b").as_dict() == {1: 1.0}

    def test_missing_measure_is_parse_error(self):
        doc = json.loads(json.dumps(TWO_DIRAC_DOC))
        del doc["fibers"]["w"]["measures"]["nu"][0]["w"]
        with pytest.raises(ParseError):
            parse_instance(doc)

    def test_float_formatting(self):
        assert dumps(0.1 + 0.2) == "0.3"
        assert dumps(math.inf) == '"inf"'
        assert dumps(1.0) == "1"
        assert dumps([1.5, 2.0]) == "[1.5, 2]"

    def test_csv_measure(self, tmp_path):
        path = tmp_path / "cloud.csv"
        path.write_text("x,w\n0.0,1.0\n1.0,3.0\n")
        coords, measure = load_csv_measure(str(path))
        assert np.allclose(coords, [0.0, 1.0])
        assert measure.as_dict() == {0: 0.25, 1: 0.75}

    def test_report_csv_long_format(self):
        text = report_to_csv({"results": {"value": 1.5, "profile": {"w1": 2.0}}})
        lines = text.strip().splitlines()
        assert lines[0] == "quantity,base_id,value"
        assert "results.value,,1.5" in lines


class TestGenerate:
    def test_deterministic_and_golden(self, tmp_path):
        a = dump_text(generate_instance(seed=0, n_fibers=2, n_atoms=3))
        b = dump_text(generate_instance(seed=0, n_fibers=2, n_atoms=3))
        assert a == b
        assert hashlib.sha256(a.encode()).hexdigest() == GOLDEN_SHA256

    def test_different_seeds_differ(self):
        a = dump_text(generate_instance(seed=0))
        b = dump_text(generate_instance(seed=1))
        assert a != b

    def test_oracle_bound_enforced(self):
        with pytest.raises(TooLarge):
            generate_instance(seed=0, n_atoms=5, oracle_checkable=True)

    def test_generated_instances_parse(self, tmp_path):
        for kind in ("interval", "square"):
            doc = generate_instance(seed=3, n_fibers=2, n_atoms=4, kind=kind)
            path = tmp_path / f"{kind}.json"
            save_document(str(path), doc)
            inst = load_instance(str(path))
            assert set(inst.measures) == {"m1", "m2"}


class TestCLI:
    def _write(self, tmp_path, doc, name="inst.json"):
        path = tmp_path / name
        save_document(str(path), doc)
        return str(path)

    def test_ot_two_diracs(self, tmp_path, capsys):
        path = self._write(tmp_path, TWO_DIRAC_DOC)
        code = main(["ot", "--input", path, "--p", "2"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["results"]["value_p"] == pytest.approx(4.0)
        assert out["results"]["mk"] == pytest.approx(2.0)

    def test_ot_csv_pair(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("0.0,0.5\n1.0,0.5\n")
        b.write_text("0.0,0.25\n1.0,0.75\n")
        code = main(["ot", "--mu-csv", str(a), "--nu-csv", str(b), "--p", "1"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["results"]["value_p"] == pytest.approx(0.25)

    def test_dist_identical_is_zero(self, tmp_path, capsys):
        doc = generate_instance(seed=5, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        code = main(["dist", "--input", path, "--m", "m1", "--n", "m1", "--p", "2", "--q", "inf"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["results"]["distance"] == 0.0

    def test_dist_report_reparses_and_csv(self, tmp_path, capsys):
        doc = generate_instance(seed=5, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        assert main(["dist", "--input", path, "--m", "m1", "--n", "m2", "--p", "2"]) == 0
        json.loads(capsys.readouterr().out)
        assert (
            main(["dist", "--input", path, "--m", "m1", "--n", "m2", "--p", "2", "--format", "csv"])
            == 0
        )
        text = capsys.readouterr().out
        assert text.splitlines()[0] == "quantity,base_id,value"

    def test_bary_multi_fiber_rejected(self, tmp_path, capsys):
        doc = generate_instance(seed=5, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        assert main(["bary", "--input", path, "--names", "m1,m2", "--p", "2"]) == 2

    def test_disint_bary_and_certify(self, tmp_path, capsys):
        doc = generate_instance(seed=6, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        code = main(
            ["disint-bary", "--input", path, "--names", "m1,m2", "--p", "2", "--q", "4"]
        )
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["results"]["certified"] is True
        code = main(["certify", "--input", path, "--names", "m1,m2", "--p", "2", "--q", "2"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["results"]["gap"] <= 1e-7
        assert "zeta" in out["results"]["certificate"]

    def test_probe_uniqueness(self, tmp_path, capsys):
        doc = generate_instance(seed=7, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        code = main(
            [
                "probe-uniqueness",
                "--input",
                path,
                "--names",
                "m1,m2",
                "--p",
                "2",
                "--q",
                "2",
                "--trials",
                "4",
                "--radius",
                "1e-9",
                "--seed",
                "0",
            ]
        )
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert "max_pairwise_distance" in out["results"]

    def test_determinism_byte_identical(self, tmp_path):
        doc = generate_instance(seed=8, n_fibers=2, n_atoms=3)
        path = self._write(tmp_path, doc)
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        args = ["certify", "--input", path, "--names", "m1,m2", "--p", "2", "--q", "4"]
        assert main(args + ["--output", str(out1)]) == 0
        assert main(args + ["--output", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_example_intervals(self, capsys):
        code = main(["example", "2.2", "--n", "20"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        res = out["results"]
        assert res["lp_value"] == pytest.approx(1.5, abs=0.02)
        assert res["dual_value"] == pytest.approx(1.5, abs=0.02)
        assert res["mk1_nu0_nu1"] == pytest.approx(3.0, abs=1e-9)
        assert res["nonuniqueness_witness"] is True
        assert set(res["minimizers"]) == {"nu0", "nu1"}

    def test_example_shared_fiber(self, capsys):
        code = main(["example", "2.1"])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        res = out["results"]
        assert res["objective_difference"] <= 1e-6
        assert res["distance_between_candidates"] > 0.1
        assert res["distinct_equal_value_minimizers"] is True

    def test_bad_input_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["dist", "--input", str(bad), "--p", "2"]) == 2
        assert main(["ot", "--p", "2"]) == 2

    def test_generate_cli_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "gen.json"
        code = main(["generate", "--seed", "0", "--fibers", "2", "--atoms", "3", "--output", str(out)])
        assert code == 0
        capsys.readouterr()
        inst = load_instance(str(out))
        assert len(inst.base_ids) == 2

    def test_generate_oracle_bound_exit_2(self, capsys):
        assert main(["generate", "--seed", "0", "--atoms", "5", "--oracle-checkable"]) == 2
