"""Convolution building blocks shared by the encoders, generator and discriminator."""

import torch.nn as nn

IN_EPS = 1e-5


class ConvBlock(nn.Module):
    """Pad -> Conv -> [InstanceNorm] -> [activation].

    ``padding_mode`` is ``"reflect"`` or ``"zero"``.
    """

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, norm="in",
                 act="relu", padding_mode="reflect"):
        super().__init__()
        if padding_mode == "reflect" and padding > 0:
            self.pad = nn.ReflectionPad2d(padding)
        elif padding > 0:
            self.pad = nn.ZeroPad2d(padding)
        else:
            self.pad = nn.Identity()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride)
        if norm == "in":
            self.norm = nn.InstanceNorm2d(out_ch, affine=False, eps=IN_EPS)
        elif norm in (None, "none"):
            self.norm = nn.Identity()
        else:
            raise ValueError(f"unknown norm {norm!r}")
        if act == "relu":
            self.act = nn.ReLU()
        elif act == "lrelu":
            self.act = nn.LeakyReLU(0.2)
        elif act == "tanh":
            self.act = nn.Tanh()
        elif act in (None, "none"):
            self.act = nn.Identity()
        else:
            raise ValueError(f"unknown activation {act!r}")

    def forward(self, x):
        return self.act(self.norm(self.conv(self.pad(x))))


class ResBlock(nn.Module):
    """Two 3x3 convolutions with an identity skip."""

    def __init__(self, ch, norm="in", padding_mode="reflect"):
        super().__init__()
        self.body = nn.Sequential(
            ConvBlock(ch, ch, 3, 1, 1, norm=norm, act="relu", padding_mode=padding_mode),
            ConvBlock(ch, ch, 3, 1, 1, norm=norm, act="none", padding_mode=padding_mode),
        )

    def forward(self, x):
        return x + self.body(x)


def init_weights(module, std=0.02):
    """normal(0, std) conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def scaled(width, factor):
    return max(1, int(round(width * factor)))
