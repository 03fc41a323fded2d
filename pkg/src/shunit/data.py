"""Paired (image, label mask) datasets for the two unpaired domains.

Images are float tensors ``[3, H, W]`` in ``[-1, 1]``; masks are int64
tensors ``[H, W]`` of class indices. On disk a domain lives at
``<root>/<domain>/images/*.png`` with index masks at
``<root>/<domain>/labels/*.png``, paired by file stem.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

DOMAINS = ("X", "Y")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSample:
    image: torch.Tensor
    mask: torch.Tensor
    domain: str
    name: str = ""

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.image.shape[-2:] != self.mask.shape[-2:]:
            raise ValueError(
                f"image {tuple(self.image.shape)} and mask {tuple(self.mask.shape)} sizes differ")


@dataclass
class SyntheticSpec:
    """Rectangles-on-background generator settings.

    ``means[d][n]`` / ``stds[d][n]`` are per-channel RGB intensity
    statistics of class ``n`` in domain ``d``. Class 0 fills the
    background; every other class gets one axis-aligned rectangle.
    """

    canvas_size: int = 32
    num_classes: int = 2
    means: dict = field(default_factory=lambda: {
        "X": [(0.0, 0.0, 0.0), (0.6, 0.6, 0.6)],
        "Y": [(0.0, 0.0, 0.0), (-0.6, -0.6, -0.6)],
    })
    stds: dict = field(default_factory=lambda: {
        "X": [(0.1, 0.1, 0.1), (0.1, 0.1, 0.1)],
        "Y": [(0.1, 0.1, 0.1), (0.1, 0.1, 0.1)],
    })
    min_rect: int = 8
    max_rect: int = 16
    seed: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.canvas_size % 4:
            raise ValueError("canvas_size must be divisible by 4")
        if not 1 <= self.min_rect <= self.max_rect <= self.canvas_size:
            raise ValueError("need 1 <= min_rect <= max_rect <= canvas_size")
        for table in (self.means, self.stds):
            for d in DOMAINS:
                if len(table[d]) != self.num_classes:
                    raise ValueError(f"domain {d}: expected {self.num_classes} class entries")
                for row in table[d]:
                    if len(row) != 3:
                        raise ValueError("per-class statistics need 3 channels")
        for d in DOMAINS:
            for row in self.means[d]:
                if any(abs(v) > 1 for v in row):
                    raise ValueError("intensity means must lie in [-1, 1]")


def check_mask(mask, num_classes):
    """Raise if any mask value is outside ``[0, num_classes)``."""
    bad = (mask < 0) | (mask >= num_classes)
    if bool(bad.any()):
        loc = tuple(int(i) for i in bad.nonzero()[0])
        raise DatasetError(
            f"class index out of range: value {int(mask[loc])} at pixel {loc} "
            f"(num_classes={num_classes})")


def to_unit_range(pixels):
    """uint8 [0, 255] -> float [-1, 1]."""
    return torch.as_tensor(np.array(pixels), dtype=torch.float32) / 127.5 - 1.0


def to_uint8(image):
    """float [-1, 1] tensor ``[3, H, W]`` -> uint8 array ``[H, W, 3]``."""
    arr = ((image.detach().cpu().clamp(-1, 1) + 1.0) * 127.5).round()
    return arr.permute(1, 2, 0).numpy().astype(np.uint8)


def load_dataset(root, domain, num_classes):
    """Load every (image, mask) pair of ``domain`` under ``root``, sorted by stem."""
    if domain not in DOMAINS:
        raise DatasetError(f"unknown domain {domain!r}")
    return load_pairs(Path(root) / domain, num_classes, domain)


def load_pairs(directory, num_classes, domain="X"):
    """Load ``directory/images/*.png`` with ``directory/labels/*.png`` paired by stem."""
    base = Path(directory)
    img_dir, lbl_dir = base / "images", base / "labels"
    if not img_dir.is_dir() or not lbl_dir.is_dir():
        raise DatasetError(f"{base} must contain images/ and labels/ subdirectories")
    images = {p.stem: p for p in img_dir.glob("*.png")}
    labels = {p.stem: p for p in lbl_dir.glob("*.png")}
    for stem in sorted(images.keys() ^ labels.keys()):
        orphan = images.get(stem) or labels.get(stem)
        raise DatasetError(f"unpaired file: {orphan}")

    samples = []
    for stem in sorted(images):
        with Image.open(images[stem]) as im:
            image = to_unit_range(im.convert("RGB")).permute(2, 0, 1).contiguous()
        with Image.open(labels[stem]) as lb:
            if lb.mode not in ("L", "P", "I", "I;16"):
                raise DatasetError(f"{labels[stem]}: label must be a single-channel index image")
            mask = torch.as_tensor(np.asarray(lb, dtype=np.int64))
        try:
            check_mask(mask, num_classes)
        except DatasetError as exc:
            raise DatasetError(f"{labels[stem]}: {exc}") from None
        samples.append(DomainSample(image, mask, domain, stem))
    return samples


def save_sample(sample, root):
    """Write a sample as ``<root>/<domain>/{images,labels}/<name>.png``."""
    save_pair(Path(root) / sample.domain, sample.name, sample.image, sample.mask)


def save_pair(directory, name, image, mask):
    """Write ``directory/images/<name>.png`` and ``directory/labels/<name>.png``."""
    base = Path(directory)
    (base / "images").mkdir(parents=True, exist_ok=True)
    (base / "labels").mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(base / "images" / f"{name}.png")
    Image.fromarray(mask.numpy().astype(np.uint8), mode="L").save(
        base / "labels" / f"{name}.png")


def one_hot(mask, num_classes):
    """``[..., H, W]`` index mask -> ``[..., N, H, W]`` float one-hot."""
    check_mask(mask, num_classes)
    out = F.one_hot(mask.long(), num_classes).to(torch.get_default_dtype())
    return out.movedim(-1, -3)


def downsample_mask(mask, factor):
    """Nearest-neighbour subsampling anchored at the top-left pixel of each cell."""
    h, w = mask.shape[-2:]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"factor {factor} must divide mask size {h}x{w}")
    return mask[..., ::factor, ::factor]


def generate_synthetic(spec, count, domain="X"):
    """Draw ``count`` samples of ``domain``; deterministic in ``spec.seed``."""
    spec.validate()
    # Per-domain stream so X and Y are independent but each reproducible.
    rng = np.random.default_rng([spec.seed, DOMAINS.index(domain)])
    size = spec.canvas_size
    means = np.asarray(spec.means[domain], dtype=np.float64)
    stds = np.asarray(spec.stds[domain], dtype=np.float64)
    samples = []
    for k in range(count):
        mask = np.zeros((size, size), dtype=np.int64)
        for n in range(1, spec.num_classes):
            rh, rw = rng.integers(spec.min_rect, spec.max_rect + 1, size=2)
            top = rng.integers(0, size - rh + 1)
            left = rng.integers(0, size - rw + 1)
            mask[top:top + rh, left:left + rw] = n
        noise = rng.standard_normal((3, size, size))
        image = means[mask].transpose(2, 0, 1) + stds[mask].transpose(2, 0, 1) * noise
        image = np.clip(image, -1.0, 1.0)
        samples.append(DomainSample(
            torch.as_tensor(image, dtype=torch.float32),
            torch.as_tensor(mask),
            domain,
            f"{domain.lower()}_{k:05d}",
        ))
    return samples


def stack(samples):
    """Batch a list of samples into ``([B, 3, H, W], [B, H, W])``."""
    return (torch.stack([s.image for s in samples]),
            torch.stack([s.mask for s in samples]))
