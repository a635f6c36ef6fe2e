"""CLI subcommands, exit codes, manifests, and the overlay figure."""

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from parceltrace.cli import emit_overlay, main
from parceltrace.codecs import load_class_png, load_gray, write_cbt
from parceltrace.errors import ValidationError
from parceltrace.manifest import sha256_file
from parceltrace.raster import BinaryRaster, GrayRaster, ProbTensor

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "losses"


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture()
def scene(tmp_path):
    out = tmp_path / "scene"
    assert run("synth", "--seed", 42, "--width", 160, "--height", 160, "--parcels", 5, "--out", out) == 0
    return out


class TestBasicCommands:
    def test_synth_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("synth", "--seed", 9, "--out", a) == 0
        assert run("synth", "--seed", 9, "--out", b) == 0
        assert (a / "image.png").read_bytes() == (b / "image.png").read_bytes()
        assert (a / "instance.png").read_bytes() == (b / "instance.png").read_bytes()

    def test_preprocess_filters(self, scene, tmp_path):
        out = tmp_path / "lap.png"
        assert run("preprocess", "--in", scene / "image.png", "--out", out, "--filter", "laplacian") == 0
        assert load_gray(out).data.shape == (160, 160)

    def test_makemask(self, scene, tmp_path):
        out = tmp_path / "mask.png"
        assert run("makemask", "--in", scene / "instance.png", "--out", out, "--buffer", 2) == 0
        mask = load_class_png(out)
        assert set(np.unique(mask.data)) <= {0, 1, 2}

    def test_makemask_rejects_buffer_3_without_flag(self, scene, tmp_path):
        rc = run("makemask", "--in", scene / "instance.png", "--out", tmp_path / "m.png", "--buffer", 3)
        assert rc == 1

    def test_tile_stitch_roundtrip(self, scene, tmp_path):
        tiles = tmp_path / "tiles"
        assert run("tile", "--in", scene / "image.png", "--out", tiles, "--size", 64) == 0
        assert (tiles / "grid.json").exists()
        assert len(list(tiles.glob("tile_*.png"))) == 9  # ceil(160/64)^2
        back = tmp_path / "back.png"
        assert run("stitch", "--tiles", tiles, "--grid-json", tiles / "grid.json", "--out", back) == 0
        assert (scene / "image.png").read_bytes() == back.read_bytes()

    def test_segment_and_skeletonize(self, scene, tmp_path):
        pred = tmp_path / "pred.png"
        assert run("segment-baseline", "--in", scene / "image.png", "--out", pred) == 0
        skel = tmp_path / "skel.png"
        assert run("skeletonize", "--in", pred, "--out", skel) == 0
        arr = np.asarray(Image.open(skel))
        assert set(np.unique(arr)) <= {0, 255}

    def test_vectorize_both_formats(self, scene, tmp_path):
        pred, skel = tmp_path / "pred.png", tmp_path / "skel.png"
        run("segment-baseline", "--in", scene / "image.png", "--out", pred)
        run("skeletonize", "--in", pred, "--out", skel)
        base = tmp_path / "vec"
        assert run("vectorize", "--in", skel, "--out", base, "--format", "both") == 0
        from parceltrace.shapefile import read_shapefile

        polys = read_shapefile(base)
        assert polys.vertex_count() > 0
        doc = json.loads((tmp_path / "vec.geojson").read_text())
        assert len(doc["features"]) == len(polys.polylines)

    def test_vectorize_with_world_file(self, scene, tmp_path):
        pred, skel = tmp_path / "pred.png", tmp_path / "skel.png"
        run("segment-baseline", "--in", scene / "image.png", "--out", pred)
        run("skeletonize", "--in", pred, "--out", skel)
        wld = tmp_path / "img.wld"
        wld.write_text("0.72\n0\n0\n-0.72\n1000.0\n2000.0\n")
        base = tmp_path / "geo"
        assert run("vectorize", "--in", skel, "--out", base, "--world-file", wld) == 0
        from parceltrace.shapefile import read_shapefile

        polys = read_shapefile(base, space="world")
        xs = np.concatenate([ln[:, 0] for ln in polys.polylines])
        assert (xs >= 1000.0).all()


class TestEvaluateCommand:
    def make_line_png(self, path, col, size=12):
        arr = np.zeros((size, size), dtype=np.uint8)
        arr[:, col] = 255
        Image.fromarray(arr, mode="L").save(path)

    def test_report_line_format(self, tmp_path, capsys):
        d, r = tmp_path / "d.png", tmp_path / "r.png"
        self.make_line_png(d, 6)
        self.make_line_png(r, 5)
        assert run("evaluate", "--detected", d, "--reference", r, "--bf", 3) == 0
        out = capsys.readouterr().out.strip()
        assert out.startswith("precision=1.000000, recall=1.000000, raw_recall=")
        assert "TP=12, FP=0, FN=24" in out

    def test_json_output(self, tmp_path):
        d, r = tmp_path / "d.png", tmp_path / "r.png"
        self.make_line_png(d, 5)
        self.make_line_png(r, 5)
        j = tmp_path / "res.json"
        assert run("evaluate", "--detected", d, "--reference", r, "--bf", 2, "--json", j) == 0
        doc = json.loads(j.read_text())
        assert doc["BF"] == 2 and doc["precision"] == 1.0

    def test_size_mismatch_exit_1_names_sizes(self, tmp_path, capsys):
        d, r = tmp_path / "d.png", tmp_path / "r.png"
        self.make_line_png(d, 3, size=10)
        self.make_line_png(r, 3, size=12)
        assert run("evaluate", "--detected", d, "--reference", r, "--bf", 2) == 1
        err = capsys.readouterr().err
        assert "10" in err and "12" in err

    def test_missing_file_exit_2(self, tmp_path):
        d = tmp_path / "d.png"
        self.make_line_png(d, 3)
        assert run("evaluate", "--detected", d, "--reference", tmp_path / "nope.png", "--bf", 2) == 2


class TestLossEvalCommand:
    def test_matches_library(self, capsys):
        pred = FIXTURES / "case01_uniformish_pred.cbt"
        target = FIXTURES / "case01_uniformish_target.cbt"
        assert run("loss-eval", "--kind", "jaccard+focal", "--pred", pred, "--target", target) == 0
        printed = float(capsys.readouterr().out.strip())
        expected = json.loads((FIXTURES / "expected_losses.json").read_text())
        assert printed == pytest.approx(expected["case01_uniformish"]["jaccard+focal"], abs=1e-9)

    def test_non_onehot_target_rejected(self, tmp_path):
        t = ProbTensor(np.full((2, 2, 3), 1 / 3, dtype=np.float32))
        p_path, t_path = tmp_path / "p.cbt", tmp_path / "t.cbt"
        write_cbt(t, p_path)
        write_cbt(t, t_path)
        assert run("loss-eval", "--kind", "dice", "--pred", p_path, "--target", t_path) == 1


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert run("synth", "--seed", 1, "--out", "x", "--bogus") == 1

    def test_no_subcommand(self, capsys):
        assert run() == 1

    def test_missing_required_flag(self):
        assert run("synth", "--out", "x") == 1  # --seed required


class TestConfigFile:
    def test_config_provides_defaults(self, tmp_path, capsys):
        d, r = tmp_path / "d.png", tmp_path / "r.png"
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[:, 4] = 255
        Image.fromarray(arr, mode="L").save(d)
        Image.fromarray(arr, mode="L").save(r)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"detected": str(d), "reference": str(r), "bf": 2}))
        assert run("evaluate", "--config", cfg) == 0
        assert "precision=1.000000" in capsys.readouterr().out

    def test_explicit_flag_overrides_config(self, tmp_path, capsys):
        scene = tmp_path / "s"
        run("synth", "--seed", 3, "--out", scene)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"filter": "laplacian"}))
        out = tmp_path / "o.png"
        assert (
            run("preprocess", "--config", cfg, "--in", scene / "image.png", "--out", out, "--filter", "none")
            == 0
        )
        assert load_gray(out).data.tobytes() == load_gray(scene / "image.png").data.tobytes()


class TestPipeline:
    def test_end_to_end_with_evaluation(self, scene, tmp_path, capsys):
        out = tmp_path / "run"
        rc = run(
            "pipeline", "--in", scene / "image.png", "--instance", scene / "instance.png",
            "--out", out, "--bf", "3", "--format", "both",
        )
        assert rc == 0
        for name in (
            "filtered.png", "grid.json", "prediction.png", "boundary_band.png",
            "skeleton.png", "boundary.shp", "boundary.shx", "boundary.dbf",
            "boundary.geojson", "reference.png", "results.json", "overlay.png",
            "manifest.json",
        ):
            assert (out / name).exists(), name
        results = json.loads((out / "results.json").read_text())
        assert results["3"]["fscore"] > 0.9
        assert "BF=3" in capsys.readouterr().out

    def test_manifest_digests_match_files(self, scene, tmp_path):
        out = tmp_path / "run"
        run("pipeline", "--in", scene / "image.png", "--out", out, "--bf", "3")
        manifest = json.loads((out / "manifest.json").read_text())
        stage_names = [s["name"] for s in manifest["stages"]]
        assert stage_names == ["preprocess", "tile", "predict-baseline", "stitch", "boundary", "thin", "vectorize"]
        for stage in manifest["stages"]:
            for path, digest in {**stage["inputs"], **stage["outputs"]}.items():
                assert sha256_file(path) == digest, path

    def test_outputs_byte_identical_across_runs(self, scene, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["pipeline", "--in", scene / "image.png", "--instance", scene / "instance.png", "--bf", "2,3"]
        assert run(*args, "--out", out1) == 0
        assert run(*args, "--out", out2) == 0
        for p1 in sorted(out1.rglob("*")):
            if p1.is_dir() or p1.name == "manifest.json":
                continue
            p2 = out2 / p1.relative_to(out1)
            assert p1.read_bytes() == p2.read_bytes(), p1.name
        m1 = json.loads((out1 / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        for s in m1["stages"] + m2["stages"]:
            s["wall_time_s"] = 0.0
        m1["config"]["output"] = m2["config"]["output"] = ""
        for s in m1["stages"] + m2["stages"]:
            s["inputs"] = {Path(k).name: v for k, v in s["inputs"].items()}
            s["outputs"] = {Path(k).name: v for k, v in s["outputs"].items()}
        assert m1 == m2

    def test_evaluate_flag_without_instance_exits_1(self, scene, tmp_path, capsys):
        rc = run("pipeline", "--in", scene / "image.png", "--out", tmp_path / "x", "--evaluate")
        assert rc == 1
        assert "instance" in capsys.readouterr().err

    def test_ingest_prediction_source(self, tmp_path):
        # Build CBT tiles that are confidently "boundary" on a ring.
        size = 64
        prob = np.full((size, size, 3), 0.0, dtype=np.float32)
        prob[:, :, 0] = 0.9
        prob[:, :, 1:] = 0.05
        ring = np.zeros((size, size), dtype=bool)
        ring[10, 10:50] = ring[50, 10:50] = True
        ring[10:50, 10] = ring[10:51, 50] = True
        prob[ring] = (0.05, 0.05, 0.9)
        tdir = tmp_path / "pred"
        tdir.mkdir()
        write_cbt(ProbTensor(prob, probabilities=True), tdir / "tile_0_0.cbt")
        img = tmp_path / "img.png"
        Image.fromarray(np.full((size, size), 90, dtype=np.uint8), mode="L").save(img)
        out = tmp_path / "run"
        rc = run("pipeline", "--in", img, "--out", out, "--prediction", tdir, "--tile-size", size)
        assert rc == 0
        mask = load_class_png(out / "prediction.png")
        assert (mask.data[ring] == 2).all()

    def test_thread_cap_env(self, scene, tmp_path, monkeypatch):
        monkeypatch.setenv("PARCEL_TRACE_THREADS", "2")
        assert run("pipeline", "--in", scene / "image.png", "--out", tmp_path / "t2") == 0
        monkeypatch.setenv("PARCEL_TRACE_THREADS", "zero")
        assert run("pipeline", "--in", scene / "image.png", "--out", tmp_path / "tz") == 1

    def test_manifest_flag_on_plain_command(self, scene, tmp_path):
        m = tmp_path / "m.json"
        assert run("segment-baseline", "--in", scene / "image.png", "--out", tmp_path / "p.png", "--manifest", m) == 0
        doc = json.loads(m.read_text())
        assert doc["stages"][0]["name"] == "segment-baseline"
        assert doc["version"]


class TestOverlay:
    def test_no_detection_no_reference_is_gray_rgb(self):
        img = GrayRaster(np.arange(9, dtype=np.uint8).reshape(3, 3))
        det = BinaryRaster(np.zeros((3, 3), dtype=bool))
        import io

        buf = Path("/tmp/_overlay_a.png")
        emit_overlay(img, det, None, buf)
        rgb = np.asarray(Image.open(buf))
        assert np.array_equal(rgb[:, :, 0], img.data)
        assert np.array_equal(rgb[:, :, 1], img.data)
        assert np.array_equal(rgb[:, :, 2], img.data)

    def test_agreement_color(self, tmp_path):
        img = GrayRaster(np.zeros((4, 4), dtype=np.uint8))
        line = np.zeros((4, 4), dtype=bool)
        line[2, :] = True
        p = tmp_path / "o.png"
        emit_overlay(img, BinaryRaster(line), BinaryRaster(line), p)
        rgb = np.asarray(Image.open(p))
        assert (rgb[2] == (0, 255, 0)).all()
        assert (rgb[0] == (0, 0, 0)).all()

    def test_disjoint_has_no_agreement_pixels(self, tmp_path):
        img = GrayRaster(np.zeros((4, 4), dtype=np.uint8))
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[1, :] = True
        b[3, :] = True
        p = tmp_path / "o.png"
        emit_overlay(img, BinaryRaster(a), BinaryRaster(b), p)
        rgb = np.asarray(Image.open(p))
        assert (rgb[1] == (255, 0, 0)).all()
        assert (rgb[3] == (0, 0, 255)).all()
        assert not ((rgb == (0, 255, 0)).all(axis=2)).any()

    def test_size_mismatch_rejected(self, tmp_path):
        img = GrayRaster(np.zeros((4, 4), dtype=np.uint8))
        det = BinaryRaster(np.zeros((5, 5), dtype=bool))
        with pytest.raises(ValidationError):
            emit_overlay(img, det, None, tmp_path / "x.png")
