"""Generator, multi-scale patch discriminator and frozen perceptual extractor."""

import torch
import torch.nn as nn

from .harmonization import SHResBlock, StyleHarmonization
from .layers import ConvBlock, init_weights, scaled


class Generator(nn.Module):
    """4 SH residual blocks followed by the upsampling head

        up2 - Conv(256, 128, 5, 1, 2, IN, relu) - up2 - Conv(128, 64, 5, 1, 2, IN, relu)
        - Conv(64, 3, 7, 1, 3, tanh)

    Upsampling is nearest-neighbour. Widths scale with ``width``.
    """

    def __init__(self, content_ch, style_ch, num_classes, width=1.0, n_blocks=4,
                 padding_mode="reflect"):
        super().__init__()
        c1, c2 = scaled(128, width), scaled(64, width)
        self.blocks = nn.ModuleList(
            SHResBlock(content_ch, style_ch, num_classes, padding_mode) for _ in range(n_blocks))
        self.head = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            ConvBlock(content_ch, c1, 5, 1, 2, norm="in", act="relu", padding_mode=padding_mode),
            nn.Upsample(scale_factor=2, mode="nearest"),
            ConvBlock(c1, c2, 5, 1, 2, norm="in", act="relu", padding_mode=padding_mode),
            ConvBlock(c2, 3, 7, 1, 3, norm=None, act="tanh", padding_mode=padding_mode),
        )
        init_weights(self)
        # Unit scale at init so the SH blocks start close to plain instance norm.
        with torch.no_grad():
            for shl in self.shl_layers():
                shl.comp.gamma.bias.fill_(1.0)
                shl.mem.gamma.bias.fill_(1.0)

    def shl_layers(self):
        return [m for m in self.modules() if isinstance(m, StyleHarmonization)]

    def forward(self, content, comp, mem, mask):
        if content.shape[-2:] != mask.shape[-2:]:
            raise ValueError(
                f"content {tuple(content.shape)} and mask {tuple(mask.shape)} sizes differ")
        f = content
        for block in self.blocks:
            f = block(f, comp, mem, mask)
        return self.head(f)


class PatchDiscriminator(nn.Sequential):
    """Four stride-2 4x4 convolutions; the last emits a 1-channel logit map."""

    def __init__(self, width=1.0, padding_mode="reflect"):
        c1, c2, c3 = scaled(64, width), scaled(128, width), scaled(256, width)
        super().__init__(
            ConvBlock(3, c1, 4, 2, 1, norm=None, act="lrelu", padding_mode=padding_mode),
            ConvBlock(c1, c2, 4, 2, 1, norm=None, act="lrelu", padding_mode=padding_mode),
            ConvBlock(c2, c3, 4, 2, 1, norm=None, act="lrelu", padding_mode=padding_mode),
            ConvBlock(c3, 1, 4, 2, 1, norm=None, act=None, padding_mode=padding_mode),
        )


class MultiScaleDiscriminator(nn.Module):
    MIN_SIZE = 16

    def __init__(self, scales=2, width=1.0, padding_mode="reflect"):
        super().__init__()
        if scales < 1:
            raise ValueError("need at least one discriminator scale")
        self.scales = nn.ModuleList(PatchDiscriminator(width, padding_mode) for _ in range(scales))
        self.down = nn.AvgPool2d(3, stride=2, padding=1, count_include_pad=False)
        init_weights(self)

    def forward(self, image):
        """List of raw patch logit maps, one per scale (finest first)."""
        outs = []
        x = image
        for i, disc in enumerate(self.scales):
            if i:
                x = self.down(x)
            if min(x.shape[-2:]) < self.MIN_SIZE:
                raise ValueError(
                    f"image {tuple(image.shape[-2:])}: scale {i} input {tuple(x.shape[-2:])} "
                    f"is below the {self.MIN_SIZE}px receptive floor")
            outs.append(disc(x))
        return outs


_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class PerceptualExtractor(nn.Module):
    """Frozen feature function used by the perceptual loss and by cFID.

    ``variant="frozen-random-convnet"`` builds a seeded, randomly initialized
    4-layer convnet. ``variant="pretrained-vgg16-relu5_3"`` needs a local
    torchvision VGG-16 state dict at ``weights``; nothing is downloaded.

    ``first_block`` is everything up to and including the first spatial
    downsampling stage (conv-conv-stride for the random net, up to the
    first max-pool for VGG-16).
    """

    VARIANTS = ("frozen-random-convnet", "pretrained-vgg16-relu5_3")

    def __init__(self, variant="frozen-random-convnet", seed=1234, width=32, weights=None):
        super().__init__()
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown extractor variant {variant!r}")
        self.variant = variant
        if variant == "frozen-random-convnet":
            gen = torch.Generator().manual_seed(seed)
            self.block1 = nn.Sequential(
                nn.Conv2d(3, width, 3, 1, 1), nn.ReLU(),
                nn.Conv2d(width, width, 4, 2, 1), nn.ReLU(),
            )
            self.rest = nn.Sequential(
                nn.Conv2d(width, 2 * width, 3, 1, 1), nn.ReLU(),
                nn.Conv2d(2 * width, 2 * width, 4, 2, 1), nn.ReLU(),
            )
            with torch.no_grad():
                for m in self.modules():
                    if isinstance(m, nn.Conv2d):
                        fan_in = m.weight[0].numel()
                        m.weight.copy_(torch.randn(m.weight.shape, generator=gen)
                                       * (2.0 / fan_in) ** 0.5)
                        m.bias.zero_()
        else:
            if weights is None:
                raise ValueError("the VGG-16 extractor needs a local weights file")
            from torchvision.models import vgg16

            net = vgg16(weights=None)
            net.load_state_dict(torch.load(weights, map_location="cpu"))
            # features[:5] ends at pool1; features[:30] ends at relu5_3.
            self.block1 = net.features[:5]
            self.rest = net.features[5:30]
            self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
            self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        # Always frozen.
        return super().train(False)

    def _prep(self, image):
        if self.variant == "pretrained-vgg16-relu5_3":
            return ((image + 1) / 2 - self.mean) / self.std
        return image

    def first_block(self, image):
        return self.block1(self._prep(image))

    def forward(self, image):
        return self.rest(self.first_block(image))

