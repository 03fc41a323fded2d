"""Content and style encoders.

Each branch follows the layer list

    Conv(in, 64, 7, 1, 3) - Conv(64, 128, 4, 2, 1) - Conv(128, 256, 4, 2, 1)
    - ResBlk x4 - Conv(256, 128, 1, 1, 0)

with instance norm after every convolution in the content branches and no
normalization at all in the style encoder. ``width`` scales every channel
count (1.0 reproduces the widths above); the layer count never changes.
"""

import torch
import torch.nn as nn

from .layers import ConvBlock, ResBlock, init_weights, scaled


class EncoderBranch(nn.Sequential):
    def __init__(self, in_ch, width=1.0, norm="in", out_ch=None, n_res=4,
                 padding_mode="reflect"):
        c1, c2, c3 = scaled(64, width), scaled(128, width), scaled(256, width)
        out_ch = out_ch or scaled(128, width)
        layers = [
            ConvBlock(in_ch, c1, 7, 1, 3, norm=norm, padding_mode=padding_mode),
            ConvBlock(c1, c2, 4, 2, 1, norm=norm, padding_mode=padding_mode),
            ConvBlock(c2, c3, 4, 2, 1, norm=norm, padding_mode=padding_mode),
        ]
        layers += [ResBlock(c3, norm=norm, padding_mode=padding_mode) for _ in range(n_res)]
        layers.append(ConvBlock(c3, out_ch, 1, 1, 0, norm=norm))
        super().__init__(*layers)
        self.out_channels = out_ch


def _check_spatial(x):
    h, w = x.shape[-2:]
    if h % 4 or w % 4:
        raise ValueError(f"input size {h}x{w} must be divisible by 4")
    if min(h, w) < 8:
        # the residual blocks need at least 2x2 features for padding and IN
        raise ValueError(f"input size {h}x{w} is below the 8px minimum")


class ContentEncoder(nn.Module):
    """Image branch and one-hot label branch, concatenated along channels.

    With ``use_label=False`` the label branch is dropped and the image
    branch projects straight to the full content width.
    """

    def __init__(self, num_classes, width=1.0, use_label=True, padding_mode="reflect"):
        super().__init__()
        self.num_classes = num_classes
        self.use_label = use_label
        branch_ch = scaled(128, width)
        self.out_channels = 2 * branch_ch
        self.image_branch = EncoderBranch(
            3, width, "in", branch_ch if use_label else 2 * branch_ch, padding_mode=padding_mode)
        self.label_branch = (EncoderBranch(num_classes, width, "in", branch_ch,
                                           padding_mode=padding_mode)
                             if use_label else None)
        init_weights(self)

    def forward(self, image, onehot):
        _check_spatial(image)
        if image.shape[-2:] != onehot.shape[-2:] or image.shape[0] != onehot.shape[0]:
            raise ValueError(
                f"image {tuple(image.shape)} and one-hot {tuple(onehot.shape)} do not match")
        if onehot.shape[1] != self.num_classes:
            raise ValueError(f"expected {self.num_classes} one-hot channels, got {onehot.shape[1]}")
        feat = self.image_branch(image)
        if self.label_branch is None:
            return feat
        return torch.cat([feat, self.label_branch(onehot)], dim=1)


class StyleEncoder(nn.Module):
    """Normalization-free copy of one content branch (component style)."""

    def __init__(self, width=1.0, padding_mode="reflect"):
        super().__init__()
        self.net = EncoderBranch(3, width, norm=None, padding_mode=padding_mode)
        self.out_channels = self.net.out_channels
        init_weights(self)

    def forward(self, image):
        _check_spatial(image)
        if image.shape[1] != 3:
            raise ValueError(f"expected an RGB image, got {image.shape[1]} channels")
        return self.net(image)
