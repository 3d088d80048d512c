"""File format, config and CLI tests."""
import json
import shutil
import struct
import subprocess
import sys
from pathlib import Path

import cv2
import numpy as np
import pytest

from chordkit.brdf import render
from chordkit.chain import compute_irradiance, grid_search_rm
from chordkit.cli import main
from chordkit.config import (RUN_CONFIG_SCHEMA, RunConfig, load_run_config,
                             parse_run_config)
from chordkit.core import (DirectionalLight, TextureImage, decode_normal,
                           linear_to_srgb_array)
from chordkit.errors import ChordError, ConfigError, MissingChannelError
from chordkit.exr import read_exr, write_exr
from chordkit.heightfield import integrate_gradients, normals_to_gradients
from chordkit.io import (MaterialDirLayout, load_material, read_image_auto,
                         read_png, save_material, write_png)

from conftest import GRID_R_LEVELS, make_material

FIXTURE_LIGHT = DirectionalLight.from_angles(np.deg2rad(35.0), np.deg2rad(55.0), np.pi)


def dir_bytes(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


@pytest.fixture(scope="module")
def cli_ws(tmp_path_factory):
    """Shared CLI workspace: a ground-truth material directory, its
    render as input.exr, a diffuse variant for light estimation, and a
    run config matching the render light."""
    ws = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(20240814)

    gt = make_material(rng, 16, 16, r_range=(0.2, 0.95), m_values=(0.0, 1.0),
                       b_range=(0.3, 0.9), bump=0.08, grid_rm=True,
                       smooth_albedo=True)
    save_material(ws / "gt", gt)
    write_exr(ws / "input.exr", render(gt, FIXTURE_LIGHT).data)

    diffuse = make_material(rng, 24, 24, r_range=(0.85, 1.0), m_values=(0.0,),
                            b_range=(0.3, 0.9), bump=0.1)
    save_material(ws / "diffuse_gt", diffuse)
    write_exr(ws / "diffuse.exr", render(diffuse, FIXTURE_LIGHT).data)

    (ws / "config.json").write_text(json.dumps({
        "schema": RUN_CONFIG_SCHEMA,
        "light": {"azimuth_deg": 35.0, "elevation_deg": 55.0,
                  "radiance": np.pi},
        "optimizer": {"iterations": 8},
    }))
    write_png(ws / "black.png", np.zeros((8, 8, 3)))
    return ws


class TestExr:
    def test_float32_roundtrip_is_bitwise(self, rng, tmp_path):
        data = rng.uniform(-3.0, 3.0, (7, 5, 3)).astype(np.float32)
        write_exr(tmp_path / "x.exr", data)
        back = read_exr(tmp_path / "x.exr")
        assert back.shape == (7, 5, 3)
        assert np.array_equal(back, data.astype(np.float64))

    def test_single_channel_roundtrip(self, rng, tmp_path):
        data = rng.normal(size=(4, 9)).astype(np.float32)
        write_exr(tmp_path / "y.exr", data)
        back = read_exr(tmp_path / "y.exr")
        assert back.shape == (4, 9, 1)
        assert np.array_equal(back[:, :, 0], data.astype(np.float64))

    def test_magic_and_version(self, tmp_path):
        write_exr(tmp_path / "m.exr", np.zeros((2, 2, 1), dtype=np.float32))
        blob = (tmp_path / "m.exr").read_bytes()
        magic, version = struct.unpack("<ii", blob[:8])
        assert magic == 20000630
        assert version == 2

    def test_reads_half_float(self, tmp_path):
        # Hand-built single-channel HALF file matching the scanline layout.
        h, w = 3, 4
        data = (np.arange(h * w, dtype=np.float16) / 8.0).reshape(h, w)

        def attr(name, kind, payload):
            return (name.encode() + b"\0" + kind.encode() + b"\0"
                    + struct.pack("<i", len(payload)) + payload)

        chan = b"Y\0" + struct.pack("<i", 1) + b"\0\0\0\0" + struct.pack("<ii", 1, 1) + b"\0"
        box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
        header = (attr("channels", "chlist", chan)
                  + attr("compression", "compression", b"\0")
                  + attr("dataWindow", "box2i", box)
                  + attr("displayWindow", "box2i", box)
                  + attr("lineOrder", "lineOrder", b"\0")
                  + attr("pixelAspectRatio", "float", struct.pack("<f", 1.0))
                  + b"\0")
        out = bytearray(struct.pack("<ii", 20000630, 2) + header)
        first = len(out) + 8 * h
        line = 8 + w * 2
        for y in range(h):
            out += struct.pack("<Q", first + y * line)
        for y in range(h):
            out += struct.pack("<ii", y, w * 2) + data[y].tobytes()
        (tmp_path / "half.exr").write_bytes(bytes(out))

        back = read_exr(tmp_path / "half.exr")
        assert np.array_equal(back[:, :, 0], data.astype(np.float64))

    def test_rejects_non_exr(self, tmp_path):
        (tmp_path / "junk.exr").write_bytes(b"not an image at all........")
        with pytest.raises(ValueError, match="not an EXR"):
            read_exr(tmp_path / "junk.exr")

    def test_rejects_compressed(self, tmp_path):
        write_exr(tmp_path / "c.exr", np.zeros((2, 2, 1), dtype=np.float32))
        blob = bytearray((tmp_path / "c.exr").read_bytes())
        key = b"compression\0compression\0"
        at = blob.index(key) + len(key) + 4  # skip size field
        blob[at] = 3  # PIZ
        (tmp_path / "c.exr").write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="uncompressed"):
            read_exr(tmp_path / "c.exr")

    def test_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ValueError):
            write_exr(tmp_path / "bad.exr", np.zeros((4, 4, 2)))


class TestPng:
    def test_roundtrip_quantization_bound(self, rng, tmp_path):
        data = rng.uniform(0.0, 1.0, (8, 8, 3))
        write_png(tmp_path / "x.png", data)
        back = read_png(tmp_path / "x.png")
        assert np.abs(back - data).max() <= 0.5 / 65535.0 + 1e-12

    def test_channel_order_preserved(self, tmp_path):
        data = np.zeros((4, 4, 3))
        data[:, :, 0], data[:, :, 1], data[:, :, 2] = 0.8, 0.4, 0.1
        write_png(tmp_path / "rgb.png", data)
        back = read_png(tmp_path / "rgb.png")
        assert np.allclose(back.mean(axis=(0, 1)), [0.8, 0.4, 0.1], atol=1e-4)

    def test_single_channel_roundtrip(self, rng, tmp_path):
        data = rng.uniform(0.0, 1.0, (6, 6, 1))
        write_png(tmp_path / "g.png", data)
        back = read_png(tmp_path / "g.png")
        assert back.shape == (6, 6, 1)
        assert np.abs(back - data).max() <= 0.5 / 65535.0 + 1e-12

    def test_grid_levels_survive_exactly(self, tmp_path):
        # 65535 = 255 * 257, so every (25 + 5 i) / 255 level quantizes
        # to an exact 16-bit code and reads back bit for bit.
        data = np.tile(GRID_R_LEVELS[:, None, None], (1, 3, 1))
        write_png(tmp_path / "levels.png", data)
        back = read_png(tmp_path / "levels.png")
        assert np.array_equal(back, data)

    def test_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValueError):
            write_png(tmp_path / "bad.png", np.full((4, 4, 1), 1.5))

    def test_reads_8bit(self, tmp_path):
        cv2.imwrite(str(tmp_path / "byte.png"),
                    np.full((4, 4), 51, dtype=np.uint8))
        back = read_png(tmp_path / "byte.png")
        assert np.all(back == 51 / 255.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ChordError):
            read_png(tmp_path / "absent.png")


class TestMaterialDir:
    def test_roundtrip_within_quantization(self, rng, tmp_path):
        mat = make_material(rng, 12, 12, r_range=(0.2, 0.9), m_values=(0.0, 1.0),
                            b_range=(0.2, 0.9), bump=0.05)
        save_material(tmp_path / "m", mat)
        back = load_material(tmp_path / "m")
        assert np.abs(back.basecolor.data - mat.basecolor.data).max() < 1e-4
        assert np.abs(back.normal.data - mat.normal.data).max() < 1e-4
        assert np.abs(back.roughness.data - mat.roughness.data).max() < 1e-4
        assert np.abs(back.metalness.data - mat.metalness.data).max() < 1e-4
        assert np.abs(back.height.data - mat.height.data).max() < 1e-5
        assert abs(back.height.data.mean()) <= 1e-5

    def test_layout_paths(self, tmp_path):
        layout = MaterialDirLayout(tmp_path)
        assert layout.basecolor.name == "basecolor.png"
        assert layout.meta.name == "meta.json"

    def test_meta_schema_written(self, rng, tmp_path):
        mat = make_material(rng, 8, 8, r_range=(0.3, 0.7), m_values=(0.0,),
                            b_range=(0.3, 0.7), bump=0.05)
        layout = save_material(tmp_path / "m", mat)
        meta = json.loads(layout.meta.read_text())
        assert meta["schema"] == "chordkit.material_meta/1"
        assert set(meta["height"]) == {"offset", "scale"}

    def test_defaults_for_missing_channels(self, rng, tmp_path, caplog):
        mat = make_material(rng, 8, 8, r_range=(0.3, 0.7), m_values=(0.0,),
                            b_range=(0.3, 0.7), bump=0.05)
        save_material(tmp_path / "m", mat)
        for name in ("normal.png", "roughness.png", "metalness.png",
                     "height.png", "meta.json"):
            (tmp_path / "m" / name).unlink()
        with caplog.at_level("WARNING", logger="chordkit.io"):
            back = load_material(tmp_path / "m")
        assert np.all(back.normal.data[:, :, 2] == 1.0)
        assert np.all(back.roughness.data == 0.5)
        assert np.all(back.metalness.data == 0.0)
        assert np.all(back.height.data == 0.0)
        assert len(caplog.records) >= 4

    def test_missing_basecolor_is_an_error(self, tmp_path):
        (tmp_path / "m").mkdir()
        with pytest.raises(MissingChannelError):
            load_material(tmp_path / "m")
        with pytest.raises(ChordError):
            load_material(tmp_path / "nope")

    def test_read_image_auto(self, rng, tmp_path):
        linear = rng.uniform(0.0, 1.0, (6, 6, 3))
        write_exr(tmp_path / "img.exr", linear)
        via_exr = read_image_auto(tmp_path / "img.exr")
        assert np.abs(via_exr.data - linear).max() < 1e-6  # float32 storage

        write_png(tmp_path / "img.png", linear_to_srgb_array(linear))
        via_png = read_image_auto(tmp_path / "img.png")
        assert np.abs(via_png.data - linear).max() < 1e-4
        with pytest.raises(ChordError):
            read_image_auto(tmp_path / "missing.exr")


class TestRunConfig:
    def test_defaults(self):
        config = parse_run_config({})
        assert config.seed == 0
        assert config.light.direction[2] == 1.0
        assert config.rm_space.roughness_levels.size == 41
        assert config.optimizer.iterations == 200

    def test_light_and_optimizer_parsing(self):
        config = parse_run_config({
            "light": {"azimuth_deg": 35.0, "elevation_deg": 55.0, "radiance": 2.0},
            "optimizer": {"iterations": 12, "step_size": 0.1,
                          "weights": {"pixel": 2.0}},
            "rm_space": {"roughness_levels": [0.25, 0.5, 1.0]},
            "seed": 7,
        })
        expect = DirectionalLight.from_angles(np.deg2rad(35.0), np.deg2rad(55.0), 2.0)
        assert np.allclose(config.light.direction, expect.direction)
        assert np.all(config.light.radiance == 2.0)
        assert config.optimizer.iterations == 12
        assert config.optimizer.weights.pixel == 2.0
        # Top-level seed flows into the optimizer unless overridden.
        assert config.optimizer.rng_seed == 7
        assert np.array_equal(config.rm_space.roughness_levels, [0.25, 0.5, 1.0])

    def test_explicit_rng_seed_wins(self):
        config = parse_run_config({"seed": 7, "optimizer": {"rng_seed": 3}})
        assert config.seed == 7
        assert config.optimizer.rng_seed == 3

    @pytest.mark.parametrize("doc,needle", [
        ({"lights": {}}, "lights"),
        ({"light": {"az": 1.0}}, "az"),
        ({"optimizer": {"steps": 5}}, "steps"),
        ({"schema": "chordkit.run_config/999"}, "schema"),
    ])
    def test_unknown_keys_rejected(self, doc, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_run_config(doc)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "none.json")
        (tmp_path / "bad.json").write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_run_config(tmp_path / "bad.json")


class TestCli:
    def test_render_matches_library(self, cli_ws, tmp_path, capsys):
        rc = main(["render", str(cli_ws / "gt"),
                   "--config", str(cli_ws / "config.json"),
                   "--out", str(tmp_path / "r")])
        assert rc == 0
        assert "render: wrote" in capsys.readouterr().out
        img = render(load_material(cli_ws / "gt"), FIXTURE_LIGHT)
        back = read_exr(tmp_path / "r" / "render.exr")
        assert np.array_equal(back, img.data.astype(np.float32).astype(np.float64))
        preview = read_png(tmp_path / "r" / "render.png")
        expect = linear_to_srgb_array(np.clip(img.data, 0.0, 1.0))
        assert np.abs(preview - expect).max() <= 0.5 / 65535.0 + 1e-12

    def test_chain_passthrough_outputs(self, cli_ws, tmp_path):
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        for out in (out1, out2):
            rc = main(["chain", str(cli_ws / "input.exr"),
                       "--config", str(cli_ws / "config.json"), "--out", str(out)])
            assert rc == 0
        names = {p.name for p in out1.iterdir()}
        assert {"basecolor.png", "normal.png", "roughness.png", "metalness.png",
                "height.png", "meta.json", "irradiance.exr", "rm_r.png",
                "rm_m.png", "light_estimate.json"} <= names
        # The grid output lands on exact search-space levels even after
        # the 16-bit PNG roundtrip.
        rm_r = read_png(out1 / "rm_r.png")
        assert np.isin(rm_r, GRID_R_LEVELS).all()
        doc = json.loads((out1 / "light_estimate.json").read_text())
        assert doc["schema"] == "chordkit.light_estimate/1"
        assert set(doc) == {"schema", "azimuth_deg", "elevation_deg", "direction",
                            "radiance", "intensity_scale", "residual_mse"}
        # Reruns are byte-identical.
        assert dir_bytes(out1) == dir_bytes(out2)

    def test_chain_optim_deterministic(self, cli_ws, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            rc = main(["chain", str(cli_ws / "diffuse.exr"), "--predictor", "optim",
                       "--config", str(cli_ws / "config.json"), "--out", str(out)])
            assert rc == 0
        assert dir_bytes(out1) == dir_bytes(out2)

    def test_irradiance_then_estimate_light(self, cli_ws, tmp_path):
        # Ground-truth basecolor and normals recover the render light
        # within 3 degrees through the full file path.
        rc = main(["irradiance", str(cli_ws / "diffuse.exr"),
                   str(cli_ws / "diffuse_gt" / "basecolor.png"),
                   "--out", str(tmp_path / "irr")])
        assert rc == 0
        irr = read_exr(tmp_path / "irr" / "irradiance.exr")
        lib = compute_irradiance(read_image_auto(cli_ws / "diffuse.exr"),
                                 read_image_auto(cli_ws / "diffuse_gt" / "basecolor.png"))
        assert np.array_equal(irr, lib.data.astype(np.float32).astype(np.float64))

        rc = main(["estimate-light", str(tmp_path / "irr" / "irradiance.exr"),
                   "--normal", str(cli_ws / "diffuse_gt" / "normal.png"),
                   "--out", str(tmp_path / "light")])
        assert rc == 0
        doc = json.loads((tmp_path / "light" / "light_estimate.json").read_text())
        d = np.asarray(doc["direction"])
        ang = np.rad2deg(np.arccos(np.clip(d @ FIXTURE_LIGHT.direction, -1.0, 1.0)))
        assert ang <= 3.0

    def test_gridsearch_matches_library(self, cli_ws, tmp_path):
        rc = main(["gridsearch-rm", str(cli_ws / "input.exr"),
                   str(cli_ws / "gt" / "basecolor.png"),
                   str(cli_ws / "gt" / "normal.png"),
                   "--config", str(cli_ws / "config.json"),
                   "--out", str(tmp_path / "gs")])
        assert rc == 0
        i_rgb = read_image_auto(cli_ws / "input.exr")
        basecolor = read_image_auto(cli_ws / "gt" / "basecolor.png")
        normal = TextureImage(decode_normal(read_png(cli_ws / "gt" / "normal.png")))
        r_img, m_img = grid_search_rm(i_rgb, basecolor, normal, FIXTURE_LIGHT)
        assert np.array_equal(read_png(tmp_path / "gs" / "rm_r.png"), r_img.data)
        assert np.array_equal(read_png(tmp_path / "gs" / "rm_m.png"), m_img.data)

    def test_integrate_matches_library(self, cli_ws, tmp_path):
        rc = main(["integrate", str(cli_ws / "gt" / "normal.png"),
                   "--out", str(tmp_path / "h")])
        assert rc == 0
        normal = TextureImage(decode_normal(read_png(cli_ws / "gt" / "normal.png")))
        lib = integrate_gradients(normals_to_gradients(normal, 1.0))
        back = read_exr(tmp_path / "h" / "height.exr")
        assert np.array_equal(back, lib.data.astype(np.float32).astype(np.float64))
        meta = json.loads((tmp_path / "h" / "meta.json").read_text())
        assert meta["schema"] == "chordkit.material_meta/1"

    def test_optimize_deterministic(self, cli_ws, tmp_path):
        out1, out2 = tmp_path / "p1", tmp_path / "p2"
        for out in (out1, out2):
            rc = main(["optimize", str(cli_ws / "diffuse.exr"),
                       "--config", str(cli_ws / "config.json"), "--out", str(out)])
            assert rc == 0
        assert dir_bytes(out1) == dir_bytes(out2)
        load_material(out1)  # output is a loadable material directory

    def test_eval_self_is_infinite(self, cli_ws, tmp_path, capsys):
        rc = main(["eval", str(cli_ws / "gt"), str(cli_ws / "gt"),
                   "--out", str(tmp_path / "e")])
        assert rc == 0
        assert "relit psnr inf" in capsys.readouterr().out
        doc = json.loads((tmp_path / "e" / "eval.json").read_text())
        assert doc["schema"] == "chordkit.eval_report/1"
        assert doc["relit"]["psnr_db"] == "inf"
        for name in ("basecolor", "normal", "roughness", "metalness", "height"):
            assert doc["per_channel"][name]["psnr_db"] == "inf"

    def test_exit_codes(self, cli_ws, tmp_path):
        # Missing inputs are I/O failures.
        assert main(["render", str(tmp_path / "nothing"),
                     "--out", str(tmp_path / "x")]) == 2
        # Config problems, including unknown keys, are usage failures.
        bad = tmp_path / "bad.json"
        bad.write_text('{"lights": {}}')
        assert main(["chain", str(cli_ws / "input.exr"), "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == 64
        # Missing --out with no config out_dir is a config failure.
        assert main(["render", str(cli_ws / "gt")]) == 64
        # A signal-free input fails inside the chain.
        assert main(["chain", str(cli_ws / "black.png"),
                     "--out", str(tmp_path / "x")]) == 3

    def test_usage_errors_exit_64(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 64
        with pytest.raises(SystemExit) as exc:
            main(["no-such-verb"])
        assert exc.value.code == 64

    def test_out_dir_from_config(self, cli_ws, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"out_dir": str(tmp_path / "from_cfg")}))
        rc = main(["integrate", str(cli_ws / "gt" / "normal.png"),
                   "--config", str(cfg)])
        assert rc == 0
        assert (tmp_path / "from_cfg" / "height.exr").exists()

    def test_console_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "chordkit.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "render" in proc.stdout and "estimate-light" in proc.stdout
        assert shutil.which("chordkit") is not None
