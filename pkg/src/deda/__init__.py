"""Decoupled data augmentation.

Images are split into a class-dependent cutout (CDP) and a class-independent
background (CIP); backgrounds are inpainted hole-free, cutouts are
conservatively edited through a strength-truncated diffusion contract, and
training samples are recombined online with area-proportional soft labels.
"""

from .bank import (Bank, BankStats, CdpRecord, CipRecord, ClassInfo,
                   build_bank, combinations_per_cdp_family, load_bank,
                   sample_cdp, sample_cip)
from .combiner import (AugmentedSample, CombinerPolicy, emit_batch,
                       make_augmented_sample, mix_two_cdps,
                       next_training_sample, place_cdp, replay_sample)
from .decouple import (Cdp, CipWithHole, aggregate_masks, extract_cdp,
                       extract_cip)
from .diffusion import (Denoiser, EditConfig, Identifier, NoiseSchedule,
                        ToyGaussianDenoiser, build_schedule, forward_noise,
                        sdedit, ti_loss, ti_train, toy_gaussian_denoiser,
                        truncation_index)
from .imagecore import (Placement, alpha_area, composite_over, psnr,
                        read_png, resize_bilinear, write_png)
from .inpaint import Cip, PyramidConfig, fill_mean_color, inpaint_pyramid
from .mixers import MixResult, cutmix, mixup

__version__ = "0.1.0"

__all__ = [
    "AugmentedSample", "Bank", "BankStats", "Cdp", "CdpRecord", "Cip",
    "CipRecord", "CipWithHole", "ClassInfo", "CombinerPolicy", "Denoiser",
    "EditConfig", "Identifier", "MixResult", "NoiseSchedule", "Placement",
    "PyramidConfig", "ToyGaussianDenoiser", "aggregate_masks", "alpha_area",
    "build_bank", "build_schedule", "combinations_per_cdp_family",
    "composite_over", "cutmix", "emit_batch", "extract_cdp", "extract_cip",
    "fill_mean_color", "forward_noise", "inpaint_pyramid", "load_bank",
    "make_augmented_sample", "mix_two_cdps", "mixup", "next_training_sample",
    "place_cdp", "psnr", "read_png", "replay_sample", "resize_bilinear",
    "sample_cdp", "sample_cip", "sdedit", "ti_loss", "ti_train",
    "toy_gaussian_denoiser", "truncation_index", "write_png",
]
