"""chordkit command line: batch access to every pipeline stage.

Verbs: render, chain, irradiance, estimate-light, gridsearch-rm,
integrate, optimize, eval. Common flags: --config, --seed, --out,
--threads. CHORDKIT_LOG sets the log level. Exit codes: 0 success,
2 I/O error, 3 chain-step failure, 64 config/usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .brdf import render
from .chain import (LightEstimate, compute_irradiance, estimate_light,
                    grid_search_rm, passthrough_suite, run_chain)
from .config import RunConfig, load_run_config
from .core import (ColorSpace, MaterialSet, TextureImage, decode_normal,
                   linear_to_srgb_array)
from .errors import ChainStepError, ChordError, ConfigError
from .exr import read_exr, write_exr
from .heightfield import integrate_gradients, normals_to_gradients
from .io import (load_material, read_image_auto, read_png, save_material,
                 write_png)
from .metrics import LightBattery, evaluate_material, report_to_dict
from .optim import estimate_by_optimization, optimization_suite

__all__ = ["main"]

log = logging.getLogger("chordkit.cli")

LIGHT_ESTIMATE_SCHEMA = "chordkit.light_estimate/1"

EXIT_OK = 0
EXIT_IO = 2
EXIT_CHAIN = 3
EXIT_CONFIG = 64


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; bad invocations
    are config-class problems here."""

    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _setup_logging():
    level_name = os.environ.get("CHORDKIT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args, config: RunConfig) -> Path:
    out = args.out or config.out_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        optimizer = dataclasses.replace(config.optimizer, rng_seed=args.seed)
        config = dataclasses.replace(config, seed=args.seed, optimizer=optimizer)
    return config


def _light_estimate_dict(estimate: LightEstimate) -> dict:
    return {
        "schema": LIGHT_ESTIMATE_SCHEMA,
        "azimuth_deg": float(np.rad2deg(estimate.light.azimuth_rad)),
        "elevation_deg": float(np.rad2deg(estimate.light.elevation_rad)),
        "direction": [float(x) for x in estimate.light.direction],
        "radiance": [float(x) for x in estimate.light.radiance],
        "intensity_scale": float(estimate.intensity_scale),
        "residual_mse": float(estimate.residual_mse),
    }


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _flat_normal(h: int, w: int) -> TextureImage:
    n = np.zeros((h, w, 3))
    n[:, :, 2] = 1.0
    return TextureImage(n)


def _save_height(out: Path, height: TextureImage):
    """height.png (min-max normalized) + meta.json + lossless EXR."""
    arr = height.data
    h_min = float(arr.min())
    span = float(arr.max()) - h_min
    if span == 0.0:
        write_png(out / "height.png", np.zeros_like(arr))
        offset, scale = 0.0, 0.0
    else:
        write_png(out / "height.png", (arr - h_min) / span)
        offset, scale = h_min, span
    _write_json(out / "meta.json", {
        "schema": "chordkit.material_meta/1",
        "height": {"offset": offset, "scale": scale},
        "pixel_scale": 1.0,
    })
    write_exr(out / "height.exr", arr)


def cmd_render(args, config: RunConfig) -> int:
    material = load_material(args.material_dir)
    out = _out_dir(args, config)
    img = render(material, config.light, n_threads=args.threads)
    write_exr(out / "render.exr", img.data)
    write_png(out / "render.png", linear_to_srgb_array(np.clip(img.data, 0.0, 1.0)))
    print(f"render: wrote {out / 'render.exr'} and preview PNG "
          f"({img.height}x{img.width})")
    return EXIT_OK


def cmd_chain(args, config: RunConfig) -> int:
    i_rgb = read_image_auto(args.input)
    if args.predictor == "passthrough":
        suite = passthrough_suite()
    else:
        suite = optimization_suite(config.optimizer, n_threads=args.threads)
    out = _out_dir(args, config)
    material, state = run_chain(i_rgb, suite, space=config.rm_space,
                                n_threads=args.threads)
    save_material(out, material)
    write_exr(out / "irradiance.exr", state.irradiance.data)
    write_png(out / "rm_r.png", state.rm_roughness.data)
    write_png(out / "rm_m.png", state.rm_metalness.data)
    _write_json(out / "light_estimate.json", _light_estimate_dict(state.light_estimate))
    el = np.rad2deg(state.estimated_light.elevation_rad)
    print(f"chain[{args.predictor}]: wrote material to {out} "
          f"(light elevation {el:.1f} deg)")
    return EXIT_OK


def cmd_irradiance(args, config: RunConfig) -> int:
    i_rgb = read_image_auto(args.input)
    basecolor = read_image_auto(args.basecolor)
    out = _out_dir(args, config)
    irr = compute_irradiance(i_rgb, basecolor)
    write_exr(out / "irradiance.exr", irr.data)
    print(f"irradiance: wrote {out / 'irradiance.exr'} "
          f"(mean {irr.data.mean():.4f})")
    return EXIT_OK


def cmd_estimate_light(args, config: RunConfig) -> int:
    irr_path = Path(args.irradiance)
    if not irr_path.exists():
        raise ChordError(f"irradiance image not found: {irr_path}")
    irr = TextureImage(read_exr(irr_path), space=ColorSpace.LINEAR)
    if args.normal:
        normal = TextureImage(decode_normal(read_png(args.normal)))
    else:
        normal = _flat_normal(*irr.resolution)
    out = _out_dir(args, config)
    estimate = estimate_light(irr, normal, n_threads=args.threads)
    _write_json(out / "light_estimate.json", _light_estimate_dict(estimate))
    az = np.rad2deg(estimate.light.azimuth_rad)
    el = np.rad2deg(estimate.light.elevation_rad)
    print(f"estimate-light: azimuth {az:.2f} deg, elevation {el:.2f} deg, "
          f"scale {estimate.intensity_scale:.4f}")
    return EXIT_OK


def cmd_gridsearch_rm(args, config: RunConfig) -> int:
    i_rgb = read_image_auto(args.input)
    basecolor = read_image_auto(args.basecolor)
    normal = TextureImage(decode_normal(read_png(args.normal)))
    out = _out_dir(args, config)
    r_img, m_img = grid_search_rm(i_rgb, basecolor, normal, config.light,
                                  space=config.rm_space, n_threads=args.threads)
    write_png(out / "rm_r.png", r_img.data)
    write_png(out / "rm_m.png", m_img.data)
    print(f"gridsearch-rm: wrote rm maps to {out} "
          f"(mean r {r_img.data.mean():.3f}, mean m {m_img.data.mean():.3f})")
    return EXIT_OK


def cmd_integrate(args, config: RunConfig) -> int:
    normal = TextureImage(decode_normal(read_png(args.normal)))
    out = _out_dir(args, config)
    grads = normals_to_gradients(normal, height_scale=args.height_scale)
    height = integrate_gradients(grads)
    _save_height(out, height)
    print(f"integrate: wrote height maps to {out} "
          f"(rms {float(np.sqrt((height.data ** 2).mean())):.5f})")
    return EXIT_OK


def cmd_optimize(args, config: RunConfig) -> int:
    i_rgb = read_image_auto(args.input)
    out = _out_dir(args, config)
    if args.init_dir:
        init = load_material(args.init_dir)
    else:
        h, w = i_rgb.resolution
        init = MaterialSet(
            basecolor=TextureImage(np.clip(i_rgb.data, 0.0, 1.0)),
            normal=_flat_normal(h, w),
            roughness=TextureImage(np.full((h, w, 1), 0.5)),
            metalness=TextureImage(np.zeros((h, w, 1))),
            height=TextureImage(np.zeros((h, w, 1))),
        )
    material = estimate_by_optimization(i_rgb, config.light, init,
                                        config.optimizer, n_threads=args.threads)
    save_material(out, material)
    relit = render(material, config.light, n_threads=args.threads)
    l1 = float(np.abs(relit.data - i_rgb.data).mean())
    print(f"optimize: wrote material to {out} (render L1 {l1:.5f})")
    return EXIT_OK


def cmd_eval(args, config: RunConfig) -> int:
    pred = load_material(args.pred_dir)
    gt = load_material(args.gt_dir)
    out = _out_dir(args, config)
    report = evaluate_material(pred, gt, LightBattery.default(),
                               n_threads=args.threads)
    doc = report_to_dict(report)
    _write_json(out / "eval.json", doc)
    print(f"eval: relit psnr {doc['relit']['psnr_db']}, "
          f"seam {report.seam_energy:.3f}, wrote {out / 'eval.json'}")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="chordkit", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config path")
        p.add_argument("--seed", type=int, help="RNG seed override")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (default 1)")

    p = sub.add_parser("render", help="render a material directory")
    p.add_argument("material_dir")
    common(p)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("chain", help="run the decomposition chain on a render")
    p.add_argument("input", help="input image (EXR linear or PNG sRGB)")
    p.add_argument("--predictor", choices=("passthrough", "optim"),
                   default="passthrough")
    common(p)
    p.set_defaults(fn=cmd_chain)

    p = sub.add_parser("irradiance", help="divide a render by basecolor")
    p.add_argument("input")
    p.add_argument("basecolor")
    common(p)
    p.set_defaults(fn=cmd_irradiance)

    p = sub.add_parser("estimate-light", help="fit a directional light to irradiance")
    p.add_argument("irradiance", help="irradiance EXR")
    p.add_argument("--normal", help="normal map PNG (defaults to flat)")
    common(p)
    p.set_defaults(fn=cmd_estimate_light)

    p = sub.add_parser("gridsearch-rm", help="per-pixel roughness/metalness search")
    p.add_argument("input")
    p.add_argument("basecolor")
    p.add_argument("normal")
    common(p)
    p.set_defaults(fn=cmd_gridsearch_rm)

    p = sub.add_parser("integrate", help="integrate height from a normal map")
    p.add_argument("normal")
    p.add_argument("--height-scale", type=float, default=1.0)
    common(p)
    p.set_defaults(fn=cmd_integrate)

    p = sub.add_parser("optimize", help="projected-gradient material estimation")
    p.add_argument("input")
    p.add_argument("--init-dir", help="material directory used as initialization")
    common(p)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("eval", help="score a predicted material against ground truth")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    common(p)
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        return args.fn(args, config)
    except ConfigError as e:
        print(f"chordkit: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ChainStepError as e:
        print(f"chordkit: {e}", file=sys.stderr)
        return EXIT_CHAIN
    except (ChordError, OSError, ValueError) as e:
        print(f"chordkit: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
