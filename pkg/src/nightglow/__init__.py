"""nightglow: physically-grounded nighttime glow synthesis and zero-shot,
per-image glow suppression with retinex-based enhancement."""

from .apsf import (PhysicsError, ScatterParams, apsf_analytic, hg_phase,
                   kernel_radial_profile, kernel_second_moment, mc_scatter,
                   self_convolve)
from .config import ConfigError, RunConfig, load_config, parse_config
from .generators import (GeneratorParams, ImageGenerator, ImageGenSpec,
                         KernelGenerator, KernelGenSpec, OptimizationError,
                         gen_image, gen_kernel, gradient, init_image_gen,
                         init_kernel_gen)
from .grids import (BinaryMask, DimensionError, Kernel2D, ParameterError,
                    PixelGrid, convolve_same, luminance)
from .imageio import load_kernel, load_png, save_kernel, save_png
from .lbdn import LbdnConfig, LbdnResult, NoLightSourceError, suppress
from .lightmask import MaskConfig, extract_mask
from .losses import (LossWeights, fc_max_channel, gradient_exclusion, loss_dec,
                     loss_gen, loss_retinex, loss_tex, map_fidelity,
                     mask_confinement)
from .metrics import (EdgeConfig, MetricValue, metric_e, metric_r, metric_sigma,
                      psnr)
from .rem import RemConfig, RemResult, enhance, recombine
from .synth import (SourceElement, SourceSpec, SyntheticScene, compose,
                    load_scene, render_glow, save_scene, synth_scene)

__version__ = "0.1.0"
