"""chordkit: chain-of-rendering-decomposition toolkit for SVBRDF
material estimation on texture images.

Deterministic core of the pipeline: a Cook-Torrance renderer with
analytic gradients, the decomposition chain (irradiance, light
estimation, roughness/metalness grid search, height integration), a
projected-gradient reference estimator, an evaluation harness, and the
file/CLI plumbing that ties them together.
"""
from .brdf import (BrdfSample, ShadingJacobian, fresnel_schlick, ggx_ndf,
                   render, schlick_ggx_geometry, shade_pixel,
                   shade_pixel_with_jacobian)
from .chain import (ChainState, LightEstimate, PredictorSuite, RmSearchSpace,
                    compute_irradiance, estimate_light, grid_search_rm,
                    passthrough_suite, radiance_from_scale, run_chain)
from .config import RunConfig, load_run_config, parse_run_config
from .core import (TOP_DOWN_VIEW, ColorSpace, DirectionalLight, MaterialSet,
                   TextureImage, ViewConfig, decode_normal, encode_normal,
                   linear_to_srgb, linear_to_srgb_array, srgb_to_linear,
                   srgb_to_linear_array)
from .errors import (ChainStepError, ChordError, ConfigError,
                     MissingChannelError)
from .exr import read_exr, write_exr
from .heightfield import (GradientField, height_to_normals,
                          integrate_gradients, normals_to_gradients)
from .io import MaterialDirLayout, load_material, read_image_auto, save_material
from .metrics import (ChannelScore, EvalReport, LightBattery,
                      evaluate_material, psnr, report_to_dict, seam_energy)
from .optim import (LossReport, LossWeights, OptimConfig,
                    estimate_by_optimization, normal_cosine_loss,
                    optimization_suite, pixel_l1_loss, render_l1_loss,
                    sample_random_light, total_loss)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "ColorSpace", "TextureImage", "MaterialSet", "DirectionalLight",
    "ViewConfig", "TOP_DOWN_VIEW", "srgb_to_linear", "linear_to_srgb",
    "srgb_to_linear_array", "linear_to_srgb_array", "encode_normal",
    "decode_normal",
    # brdf
    "BrdfSample", "ShadingJacobian", "ggx_ndf", "schlick_ggx_geometry",
    "fresnel_schlick", "shade_pixel", "shade_pixel_with_jacobian", "render",
    # chain
    "RmSearchSpace", "LightEstimate", "ChainState", "PredictorSuite",
    "passthrough_suite", "compute_irradiance", "estimate_light",
    "radiance_from_scale", "grid_search_rm", "run_chain",
    # heightfield
    "GradientField", "height_to_normals", "normals_to_gradients",
    "integrate_gradients",
    # optim
    "LossWeights", "OptimConfig", "LossReport", "pixel_l1_loss",
    "normal_cosine_loss", "sample_random_light", "render_l1_loss",
    "total_loss", "estimate_by_optimization", "optimization_suite",
    # metrics
    "ChannelScore", "LightBattery", "EvalReport", "psnr", "seam_energy",
    "evaluate_material", "report_to_dict",
    # io / formats
    "read_exr", "write_exr", "MaterialDirLayout", "save_material",
    "load_material", "read_image_auto",
    # config / errors
    "RunConfig", "parse_run_config", "load_run_config", "ChordError",
    "ConfigError", "MissingChannelError", "ChainStepError",
]
