import csv
import shutil
import subprocess

import numpy as np
import pytest

from conftest import two_mode_dataset
from svgdistill import live
from svgdistill.cli import main, parse_config_text
from svgdistill.rasterizer import Raster
from svgdistill.svgio import read_image, read_svg, write_image


@pytest.fixture
def disk_ppm(tmp_path):
    path = tmp_path / "disk.ppm"
    write_image(live.disk_target(16, (8, 8), 5), path)
    return path


def test_parse_config_text():
    assert parse_config_text('{"t-min": 10, "style": "sketch"}') == {"t_min": 10, "style": "sketch"}
    text = "# comment\nsteps = 20\nstyle=sketch  # trailing\nlatent = true\n"
    assert parse_config_text(text) == {"steps": 20, "style": "sketch", "latent": True}
    with pytest.raises(ValueError):
        parse_config_text("steps 20")
    with pytest.raises(ValueError):
        parse_config_text("[1, 2]")


def test_vectorize(disk_ppm, tmp_path):
    out = tmp_path / "v.svg"
    snaps = tmp_path / "snaps"
    assert main(["vectorize", str(disk_ppm), "--paths", "2", "--schedule", "1,1", "--iters", "10",
                 "--snapshots", str(snaps), "--out", str(out)]) == 0
    assert len(read_svg(out).paths) == 2
    assert len(list(snaps.iterdir())) == 2
    with pytest.raises(SystemExit):
        main(["vectorize", str(disk_ppm), "--paths", "3", "--schedule", "1,1", "--iters", "1"])


def test_distill_reproducible(tmp_path):
    args = ["distill", "--size", "16", "--paths", "4", "--steps", "5", "--seed", "7"]
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(args + ["--out", str(a), "--trace", str(tmp_path / "t.csv")]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    with open(tmp_path / "t.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 5


def test_distill_styles(tmp_path):
    out = tmp_path / "p.svg"
    assert main(["distill", "--style", "pixel_art", "--grid", "4", "--size", "8", "--steps", "2",
                 "--mode", "sample", "--k", "1", "--out", str(out)]) == 0
    assert len(read_svg(out).paths) == 16
    out = tmp_path / "s.svg"
    assert main(["distill", "--style", "sketch", "--paths", "2", "--size", "8", "--steps", "2",
                 "--out", str(out)]) == 0
    assert all(p.stroke_width == 6 for p in read_svg(out).paths)


def test_train_prior_then_sample(tmp_path):
    images, labels = two_mode_dataset(n=64)
    np.savez(tmp_path / "d.npz", images=images, labels=np.array(labels))
    ckpt = tmp_path / "m.bin"
    assert main(["train-prior", str(tmp_path / "d.npz"), "--steps", "20", "--hidden", "16", "--batch", "8",
                 "--out", str(ckpt)]) == 0
    img = tmp_path / "x.png"
    assert main(["sample", "--prior", str(ckpt), "--label", "1", "--steps", "5", "--out", str(img)]) == 0
    assert read_image(img).pixels.shape == (8, 8, 3)
    with pytest.raises(SystemExit):
        main(["sample", "--prior", str(ckpt), "--label", "7", "--steps", "5", "--out", str(img)])


def test_train_prior_from_folders(tmp_path):
    images, labels = two_mode_dataset(n=6)
    for i, (x, y) in enumerate(zip(images, labels)):
        (tmp_path / "data" / f"class{y}").mkdir(parents=True, exist_ok=True)
        write_image(Raster.from_array(np.clip(x, 0, 1)), tmp_path / "data" / f"class{y}" / f"{i}.ppm")
    assert main(["train-prior", str(tmp_path / "data"), "--steps", "2", "--hidden", "8", "--batch", "2",
                 "--out", str(tmp_path / "m.bin")]) == 0


def test_pixel_fit_and_render(disk_ppm, tmp_path):
    svg = tmp_path / "f.svg"
    assert main(["pixel-fit", str(disk_ppm), "--grid", "4", "--out", str(svg)]) == 0
    assert len(read_svg(svg).paths) == 16
    png = tmp_path / "f.png"
    assert main(["render", str(svg), "--out", str(png), "--size", "32"]) == 0
    assert read_image(png).pixels.shape == (32, 32, 3)


def test_eval(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("item,a,b\nx,1.0,0.0\ny,0.5,0.5\n")
    assert main(["eval", "--scores", str(f)]) == 0
    out = capsys.readouterr().out
    assert "r_precision=0.500000" in out and "mean_similarity=0.750000" in out


def test_sweep(tmp_path):
    prompts = tmp_path / "p.txt"
    prompts.write_text('a "quoted", cat\na dog\n')
    out = tmp_path / "rows.csv"
    assert main(["sweep", "--prompts", str(prompts), "--k", "1,2", "--sample-steps", "3", "--size", "8",
                 "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["k"] for r in rows] == ["1", "2", "1", "2"]
    assert rows[0]["prompt"].startswith('a "quoted", cat')


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("size = 8\npaths = 2\nsteps = 3\nseed = 7\n")
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["distill", "--config", str(cfg), "--out", str(a)]) == 0
    assert len(read_svg(a).paths) == 2 and read_svg(a).width == 600
    assert main(["distill", "--config", str(cfg), "--paths", "3", "--out", str(b), "-v"]) == 0
    assert len(read_svg(b).paths) == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = red\n")
    with pytest.raises(SystemExit):
        main(["distill", "--config", str(bad)])
    bad.write_text("not a pair\n")
    with pytest.raises(SystemExit):
        main(["distill", "--config", str(bad)])


@pytest.mark.skipif(shutil.which("svgdistill") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["svgdistill", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("vectorize", "distill", "sample", "train-prior", "pixel-fit", "eval", "render", "sweep"):
        assert cmd in res.stdout
