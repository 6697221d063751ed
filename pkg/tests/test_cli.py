import json

import numpy as np
import pytest

from conftest import DATA_DIR, gradient_image
from spectral_jdec import cli, codec, model, spectral, trainer
from spectral_jdec.imageio import read_ppm, write_ppm


@pytest.fixture()
def workdir(tmp_path):
    img = gradient_image(48, 64, seed=1)
    src = tmp_path / "input.ppm"
    write_ppm(src, img.data)
    return tmp_path, src


def run(argv):
    return cli.main([str(a) for a in argv])


SMOKE_CONFIG = "patch=48\nbatch=8\nepochs=5\nc=8\nk=8\nn_res_blocks=1\n"


@pytest.fixture()
def smoke_ckpt(tmp_path, workdir):
    _, src = workdir
    cfg = tmp_path / "train.cfg"
    cfg.write_text(SMOKE_CONFIG + "synthetic_size=48\n")
    ckpt = tmp_path / "model.ckpt"
    code = run(["train", "--synthetic", 8, "--config", cfg, "--seed", 5, "-o", ckpt])
    assert code == 0
    return ckpt


class TestEncode:
    def test_writes_jfif(self, workdir, capsys):
        tmp, src = workdir
        out = tmp / "out.jpg"
        assert run(["encode", src, "--quality", 50, "-o", out]) == 0
        data = out.read_bytes()
        assert data[:2] == b"\xff\xd8" and data[-2:] == b"\xff\xd9"
        assert "bpp" in capsys.readouterr().out

    def test_bad_quality_is_usage_error(self, workdir):
        tmp, src = workdir
        out = tmp / "out.jpg"
        assert run(["encode", src, "--quality", 101, "-o", out]) == 2
        assert not out.exists()  # no partial output on bad args

    def test_output_reparses(self, workdir):
        tmp, src = workdir
        out = tmp / "out.jpg"
        run(["encode", src, "--quality", 80, "-o", out])
        spectra = codec.parse_jpeg(out.read_bytes())
        assert (spectra.width, spectra.height) == (64, 48)

    def test_missing_input(self, workdir):
        tmp, _ = workdir
        assert run(["encode", tmp / "nope.ppm", "-o", tmp / "x.jpg"]) == 1


class TestInspect:
    def test_tables_match_quality(self, workdir, capsys):
        tmp, src = workdir
        out = tmp / "out.jpg"
        run(["encode", src, "--quality", 35, "-o", out])
        capsys.readouterr()
        assert run(["inspect", out, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        luma, chroma = spectral.quality_to_qtables(35)
        assert np.array_equal(np.array(payload["q_luma"]), luma)
        assert np.array_equal(np.array(payload["q_chroma"]), chroma)
        assert payload["subsampling"] == "420"

    def test_block_dump(self, workdir, capsys):
        tmp, src = workdir
        out = tmp / "out.jpg"
        run(["encode", src, "-o", out])
        capsys.readouterr()
        assert run(["inspect", out, "--block", 0, 0, "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        spectra = codec.parse_jpeg(out.read_bytes())
        assert np.array_equal(np.array(payload["block"]), spectra.coeffs_y[0, 0])

    def test_progressive_rejected(self, workdir, capsys):
        tmp, src = workdir
        out = tmp / "out.jpg"
        run(["encode", src, "-o", out])
        data = bytearray(out.read_bytes())
        idx = data.index(b"\xff\xc0")
        data[idx + 1] = 0xC2
        bad = tmp / "progressive.jpg"
        bad.write_bytes(bytes(data))
        assert run(["inspect", bad]) == 1
        assert "progressive" in capsys.readouterr().err

    def test_block_out_of_range(self, workdir):
        tmp, src = workdir
        out = tmp / "out.jpg"
        run(["encode", src, "-o", out])
        assert run(["inspect", out, "--block", 99, 0]) == 2


class TestDecode:
    def test_baseline_constant_exact(self, tmp_path):
        img = np.full((32, 32, 3), 128, dtype=np.uint8)
        src = tmp_path / "gray.ppm"
        write_ppm(src, img)
        jpg = tmp_path / "gray.jpg"
        out = tmp_path / "back.ppm"
        run(["encode", src, "--quality", 10, "-o", jpg])
        assert run(["decode", jpg, "-o", out]) == 0
        assert np.array_equal(read_ppm(out), img)

    def test_scale_without_model_is_usage_error(self, workdir):
        tmp, src = workdir
        jpg = tmp / "x.jpg"
        run(["encode", src, "-o", jpg])
        assert run(["decode", jpg, "-o", tmp / "y.ppm", "--scale", 2]) == 2

    def test_model_decode_and_scale(self, workdir, smoke_ckpt):
        tmp, src = workdir
        jpg = tmp / "x.jpg"
        run(["encode", src, "-o", jpg])
        out = tmp / "model.ppm"
        assert run(["decode", jpg, "-o", out, "--model", smoke_ckpt]) == 0
        assert read_ppm(out).shape == (48, 64, 3)
        out2 = tmp / "model2x.ppm"
        assert run(["decode", jpg, "-o", out2, "--model", smoke_ckpt, "--scale", 2]) == 0
        assert read_ppm(out2).shape == (96, 128, 3)

    def test_version_mismatch_exit_3(self, workdir, smoke_ckpt, tmp_path):
        tmp, src = workdir
        jpg = tmp / "x.jpg"
        run(["encode", src, "-o", jpg])
        data = bytearray(smoke_ckpt.read_bytes())
        data[4] = 9
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(data))
        assert run(["decode", jpg, "-o", tmp / "y.ppm", "--model", bad]) == 3


class TestTrain:
    def test_smoke_checkpoint_loads_back(self, smoke_ckpt):
        ckpt = trainer.load_checkpoint(smoke_ckpt)
        assert ckpt.step == 5  # 8 synthetic images / batch 8 * 5 epochs
        assert ckpt.config.c == 8
        loss_csv = smoke_ckpt.parent / (smoke_ckpt.name + ".loss.csv")
        lines = loss_csv.read_text().strip().splitlines()
        assert lines[0] == "step,epoch,lr,loss"
        assert len(lines) == 6

    def test_prints_seed(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        cfg.write_text(SMOKE_CONFIG + "synthetic_size=48\n")
        run(["train", "--synthetic", 4, "--config", cfg, "--seed", 11,
             "-o", tmp_path / "m.ckpt"])
        assert "seed: 11" in capsys.readouterr().out

    def test_ablation_flag(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text(SMOKE_CONFIG + "synthetic_size=48\n")
        ckpt = tmp_path / "ab.ckpt"
        assert run(["train", "--synthetic", 4, "--config", cfg, "--ablation", "id4",
                    "-o", ckpt]) == 0
        assert trainer.load_checkpoint(ckpt).config.ablation == "fourier"

    def test_jdec_plus_trains_at_q0(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("patch=48\nbatch=2\nepochs=1\nc=8\nk=8\nn_res_blocks=1\n"
                       "synthetic_size=48\nq_set=0\n")
        assert run(["train", "--synthetic", 2, "--config", cfg,
                    "-o", tmp_path / "q0.ckpt"]) == 0

    def test_missing_data_dir(self, tmp_path):
        assert run(["train", "--data", tmp_path / "missing",
                    "-o", tmp_path / "m.ckpt"]) == 2

    def test_both_sources_rejected(self, tmp_path):
        assert run(["train", "--data", ".", "--synthetic", 4,
                    "-o", tmp_path / "m.ckpt"]) == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("bogus=1\n")
        assert run(["train", "--synthetic", 2, "--config", cfg,
                    "-o", tmp_path / "m.ckpt"]) == 2


class TestEval:
    def make_data(self, tmp_path, n=2):
        d = tmp_path / "imgs"
        d.mkdir()
        for i in range(n):
            write_ppm(d / f"img{i}.ppm", gradient_image(48, 48, seed=i).data)
        return d

    def test_record_count(self, tmp_path):
        d = self.make_data(tmp_path)
        out = tmp_path / "rd.csv"
        assert run(["eval", "--data", d, "--q", "10,20", "-o", out]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "method,q,bpp,psnr,psnr_b,ssim"
        assert len(lines) == 3

    def test_bpp_increases_with_q(self, tmp_path):
        d = tmp_path / "imgs"
        d.mkdir()
        write_ppm(d / "photo.ppm", read_ppm(DATA_DIR / "photo.ppm"))
        out = tmp_path / "rd.csv"
        assert run(["eval", "--data", d, "--q", "10,50,90", "-o", out]) == 0
        rows = out.read_text().strip().splitlines()[1:]
        bpps = [float(r.split(",")[2]) for r in rows]
        assert bpps == sorted(bpps) and bpps[0] < bpps[-1]

    def test_model_eval(self, tmp_path, smoke_ckpt):
        d = self.make_data(tmp_path)
        out = tmp_path / "rd.csv"
        assert run(["eval", "--data", d, "--q", "50", "--model", smoke_ckpt,
                    "-o", out]) == 0
        assert out.read_text().splitlines()[1].startswith("jdec,50,")

    def test_missing_model_file(self, tmp_path):
        d = self.make_data(tmp_path)
        assert run(["eval", "--data", d, "--q", "50",
                    "--model", tmp_path / "none.ckpt", "-o", tmp_path / "rd.csv"]) == 1

    def test_bad_q_list(self, tmp_path):
        d = self.make_data(tmp_path)
        assert run(["eval", "--data", d, "--q", "10,abc", "-o", tmp_path / "rd.csv"]) == 2


class TestSpectrum:
    def test_json_payload(self, workdir, smoke_ckpt, tmp_path):
        tmp, src = workdir
        jpg = tmp / "x.jpg"
        run(["encode", src, "-o", jpg])
        out = tmp_path / "viz.json"
        assert run(["spectrum", jpg, "--model", smoke_ckpt, "--block", 1, 2,
                    "-o", out]) == 0
        payload = json.loads(out.read_text())
        assert len(payload["triples"]) == 8  # k of the smoke model
        raster = np.array(payload["raster"])
        assert raster.shape == (51, 51)

    def test_block_out_of_range(self, workdir, smoke_ckpt, tmp_path):
        tmp, src = workdir
        jpg = tmp / "x.jpg"
        run(["encode", src, "-o", jpg])
        assert run(["spectrum", jpg, "--model", smoke_ckpt, "--block", 99, 99,
                    "-o", tmp_path / "viz.json"]) == 2


class TestEnv:
    def test_thread_cap_validation(self, monkeypatch, workdir, tmp_path):
        monkeypatch.setenv("SPECTRAL_JDEC_THREADS", "abc")
        tmp, src = workdir
        assert run(["encode", src, "-o", tmp_path / "x.jpg"]) == 2
        monkeypatch.setenv("SPECTRAL_JDEC_THREADS", "4")
        assert run(["encode", src, "-o", tmp_path / "x.jpg"]) == 0
