"""Style-harmonized unpaired image-to-image translation."""

from .config import RunConfig, load_config, parse_config
from .data import DomainSample, SyntheticSpec, generate_synthetic, load_dataset
from .metrics import cfid, frechet_distance, global_fid
from .trainer import SHUNIT, Trainer

__all__ = [
    "DomainSample", "RunConfig", "SHUNIT", "SyntheticSpec", "Trainer", "cfid",
    "frechet_distance", "generate_synthetic", "global_fid", "load_config", "load_dataset",
    "parse_config",
]
__version__ = "0.1.0"
