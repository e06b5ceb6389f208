import json

import numpy as np
import pytest

from phstat.cli import main
from phstat.config import ConfigError, parse_config
from phstat.reproduce import EXPERIMENT_IDS, load_experiment

ANNULUS = {
    "shape": {"kind": "annulus"},
    "pipeline": {"N": 300, "n": 30, "k": 1, "K": 40, "cutoff": 0.375},
    "seed": 1,
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


def with_analysis(**analysis):
    return {**ANNULUS, "analysis": analysis}


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"shape": {"kind": "sphere"}, "pipeline": {"N": 10, "cutoff": 1}})
        assert cfg.pipeline["k"] == 1 and cfg.pipeline["K"] == 1000
        assert cfg.noise_kind == "none" and cfg.seed == 0 and cfg.repetitions == 20

    @pytest.mark.parametrize(
        "data, field",
        [
            ({"shape": {"kind": "blob"}, "pipeline": {"cutoff": 1}}, "shape.kind"),
            ({"shape": {"kind": "annulus", "radius": 2}, "pipeline": {"N": 5, "cutoff": 1}}, "shape.radius"),
            ({"shape": {"kind": "annulus", "r_in": 2}, "pipeline": {"N": 5, "cutoff": 1}}, "shape.r_in"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5}}, "pipeline.cutoff"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"cutoff": 1}}, "pipeline.N"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": -1}}, "pipeline.cutoff"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": 1, "complex_kind": "cech"}}, "pipeline.complex_kind"),
            ({"shape": {"kind": "metric_circle", "k": 2}, "pipeline": {"cutoff": 1}}, "shape.k"),
            ({"shape": {"kind": "sphere"}, "pipeline": {"N": 5, "cutoff": 1}, "noise": {"kind": "uniform", "fraction": 2, "bounds": [[0, 1]] * 3}}, "noise.fraction"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": 1}, "analysis": {"method": "magic"}}, "analysis.method"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": 1}, "analysis": {"method": "ks", "reference": "1x[2,1)"}}, "analysis.reference"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": 1}, "extra": 1}, "extra"),
            ({"shape": {"kind": "annulus"}, "pipeline": {"N": 5, "cutoff": 1}, "seed": -3}, "seed"),
        ],
    )
    def test_errors_name_the_field(self, data, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            parse_config(data)

    def test_reference_count(self):
        cfg = parse_config(with_analysis(method="mhd", references=["1x[0,1)", "2x[0,1)"]))
        assert len(cfg.references) == 2
        with pytest.raises(ConfigError):
            cfg.reference

    def test_overrides(self):
        cfg = parse_config(ANNULUS)
        other = cfg.with_overrides(noise={"kind": "diameter_linkage", "count": 5})
        assert other.noise_kind == "diameter_linkage" and cfg.noise_kind == "none"
        pts = other.sample_points(np.random.default_rng(0))
        assert len(pts) == 305

    def test_shipped_experiments_parse(self):
        assert len(EXPERIMENT_IDS) == 8
        for eid in EXPERIMENT_IDS:
            exp = load_experiment(eid)
            assert exp.parts and all(p.levels for p in exp.parts)
        with pytest.raises(KeyError):
            load_experiment("nope")


class TestSample:
    def test_annulus(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", {**ANNULUS, "pipeline": {**ANNULUS["pipeline"], "N": 1000}})
        out = tmp_path / "pts.csv"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        pts = np.loadtxt(out, delimiter=",")
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert pts.shape == (1000, 2) and r.min() >= 0.8 and r.max() <= 1.2

    def test_torus(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", {"shape": {"kind": "torus", "r": 0.5, "R": 1}, "pipeline": {"N": 10, "cutoff": 1}})
        assert main(["sample", "--config", cfg, "--format", "json"]) == 0
        pts = np.array(json.loads(capsys.readouterr().out))
        lhs = (1 - np.hypot(pts[:, 0], pts[:, 1])) ** 2 + pts[:, 2] ** 2
        assert pts.shape == (10, 3) and np.allclose(lhs, 0.25)

    def test_bad_shape(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.json", {"shape": {"kind": "blob"}, "pipeline": {"cutoff": 1}})
        assert main(["sample", "--config", cfg]) == 2
        assert "shape.kind" in capsys.readouterr().err

    def test_byte_identical(self, tmp_path):
        cfg = write(tmp_path, "c.json", ANNULUS)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["sample", "--config", cfg, "--out", str(a)])
        main(["--seed", "1", "sample", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestBarcode:
    def test_two_points(self, tmp_path, capsys):
        pts = write(tmp_path, "two.csv", "0,0\n3,0\n")
        out = tmp_path / "bc.json"
        assert main(["barcode", pts, "--k", "0", "--cutoff", "5", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["intervals"] == [[0, 3], [0, 5]]
        capsys.readouterr()
        assert main(["barcode", pts, "--k", "0", "--cutoff", "5", "--reduced", "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["intervals"] == [[0, 3]]

    def test_metric_circle(self, tmp_path, capsys):
        cfg = write(tmp_path, "mc.json", {"shape": {"kind": "metric_circle", "k": 8}, "pipeline": {"cutoff": 5, "k": 1}})
        assert main(["barcode", "--config", cfg, "--format", "json"]) == 0
        bars = json.loads(capsys.readouterr().out)["intervals"]
        assert any(a == 1 and b >= 3 for a, b in bars)

    def test_missing_file(self, tmp_path, capsys):
        assert main(["barcode", str(tmp_path / "none.csv"), "--k", "0", "--cutoff", "1"]) == 2

    def test_guard(self, tmp_path, capsys):
        pts = write(tmp_path, "p.csv", "\n".join(f"{i * 0.01},0" for i in range(40)) + "\n")
        assert main(["barcode", pts, "--k", "2", "--cutoff", "5", "--max-simplices", "100"]) == 1
        assert "exceeds" in capsys.readouterr().err

    def test_witness(self, tmp_path, capsys):
        pts = write(tmp_path, "p.csv", "\n".join(f"{np.cos(t)},{np.sin(t)}" for t in np.linspace(0, 6, 30)) + "\n")
        assert main(["barcode", pts, "--k", "1", "--cutoff", "2", "--complex", "witness", "--landmarks", "12", "--format", "json"]) == 0
        assert json.loads(capsys.readouterr().out)["complex_kind"] == "witness"


class TestPipelineCommands:
    def test_phi_single_point(self, tmp_path, capsys):
        pts = write(tmp_path, "one.csv", "1,2\n")
        cfg = write(tmp_path, "c.json", {"shape": {"kind": "file", "path": pts}, "pipeline": {"n": 3, "K": 25, "cutoff": 1}})
        out = tmp_path / "d.json"
        assert main(["phi", "--config", cfg, "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["atoms"] == [{"barcode": [], "count": 25}]

    def test_phi_byte_identical_across_threads(self, tmp_path):
        cfg = write(tmp_path, "c.json", ANNULUS)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["phi", "--config", cfg, "--out", str(a)]) == 0
        assert main(["phi", "--config", cfg, "--out", str(b), "--threads", "2"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_stat_mhd(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", with_analysis(method="mhd", reference="1x[0.25,0.375)"))
        assert main(["stat", "--config", cfg, "--format", "json"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["method"] == "mhd" and 0 <= rec["value"] <= 0.1875

    def test_stat_long_bars_from_dist(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", ANNULUS)
        d = tmp_path / "d.json"
        main(["phi", "--config", cfg, "--out", str(d)])
        capsys.readouterr()
        scfg = write(tmp_path, "s.json", with_analysis(method="long_bars", threshold=0.01))
        assert main(["stat", "--config", scfg, "--dist", str(d), "--format", "json"]) == 0
        assert sum(json.loads(capsys.readouterr().out)["histogram"].values()) == 40

    def test_test_ks(self, tmp_path, capsys):
        cfg = write(
            tmp_path,
            "c.json",
            with_analysis(method="ks", projection="DB", reference="1x[0.25,0.375)", compare={"noise": {"kind": "diameter_linkage", "count": 5}}),
        )
        assert main(["test", "--config", cfg, "--format", "json"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["method"] == "ks" and 0 <= rec["p_value"] <= 1

    def test_test_chi2_one_bin(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", with_analysis(method="chi2", bins=1, compare={"seed": 2}))
        assert main(["test", "--config", cfg]) == 1

    def test_test_needs_second_sample(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", with_analysis(method="ks"))
        assert main(["test", "--config", cfg]) == 2
        assert "analysis.compare" in capsys.readouterr().err

    def test_ci_indices(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", {**with_analysis(method="mhd", reference="1x[0.25,0.375)", alpha=0.05), "pipeline": {**ANNULUS["pipeline"], "K": 100}})
        assert main(["ci", "--config", cfg, "--format", "json"]) == 0
        rec = json.loads(capsys.readouterr().out)
        assert (rec["params"]["low_index"], rec["params"]["high_index"]) == (40, 61)
        assert rec["low"] <= rec["params"]["median"] <= rec["high"]

    def test_wrong_method_for_command(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", with_analysis(method="ks"))
        assert main(["stat", "--config", cfg]) == 2

    def test_invalid_json(self, tmp_path, capsys):
        assert main(["phi", "--config", write(tmp_path, "c.json", "{nope")]) == 2


class TestReproduce:
    def test_unknown_id(self, capsys):
        assert main(["reproduce", "nope"]) == 2
        err = capsys.readouterr().err
        assert all(eid in err for eid in EXPERIMENT_IDS)

    def test_small_scale(self, tmp_path, capsys):
        args = ["reproduce", "annulus-linkage", "--scale", "0.05", "--levels", "0.0%", "--out", str(tmp_path)]
        assert main(args) == 0
        csv = (tmp_path / "annulus-linkage.csv").read_text().splitlines()
        assert csv[0].startswith("part,noise,projection")
        assert len(csv) == 3  # D2 and DB rows
        assert json.loads((tmp_path / "annulus-linkage_comparison.json").read_text())["compared"] > 0
        first = (tmp_path / "annulus-linkage.csv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "annulus-linkage.csv").read_bytes() == first

    def test_bad_scale(self, capsys):
        assert main(["reproduce", "annulus-linkage", "--scale", "2"]) == 2
