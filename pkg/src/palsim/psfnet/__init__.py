"""Forward-only PSF-aware aberration-recovery transformer."""

from palsim.psfnet.layers import pixel_shuffle, pixel_unshuffle
from palsim.psfnet.model import (
    PartConfig,
    init_weights,
    part_forward,
    pfm_forward,
    pmab_forward,
    psf_feature_extract,
    pvsa_forward,
    wmsa_forward,
)

__all__ = [
    "PartConfig", "init_weights", "part_forward", "pfm_forward", "pmab_forward",
    "psf_feature_extract", "pvsa_forward", "wmsa_forward", "pixel_shuffle", "pixel_unshuffle",
]
