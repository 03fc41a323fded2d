"""Style harmonization layer (SHL) and the SH residual block.

The layer normalizes its input with per-sample, per-channel statistics and
denormalizes it with a scale/shift that blends two sources: the component
style (extracted from the input image itself) and the memory style (read
from the class memory). The blend weight is a learnable scalar per class,
broadcast over that class's region of the label mask.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import IN_EPS, ConvBlock


def alpha_mask(alpha, mask):
    """Gather per-class blend weights: ``out[b, h, w] = alpha[mask[b, h, w]]``."""
    if bool((mask < 0).any()) or bool((mask >= alpha.shape[0]).any()):
        raise ValueError(f"mask holds class indices outside [0, {alpha.shape[0]})")
    return alpha[mask]


def instance_stats(f, eps=IN_EPS):
    """Spatial mean and std (population variance + eps) per sample and channel."""
    mu = f.mean(dim=(-2, -1), keepdim=True)
    var = f.var(dim=(-2, -1), keepdim=True, unbiased=False)
    return mu, torch.sqrt(var + eps)


def denormalize(f, gamma, beta, eps=IN_EPS):
    mu, sigma = instance_stats(f, eps)
    return gamma * (f - mu) / sigma + beta


class Modulation(nn.Module):
    """shared 3x3 conv + ReLU, then separate 3x3 convs for scale and shift."""

    def __init__(self, style_ch, feat_ch, hidden):
        super().__init__()
        self.shared = nn.Conv2d(style_ch, hidden, 3, padding=1)
        self.gamma = nn.Conv2d(hidden, feat_ch, 3, padding=1)
        self.beta = nn.Conv2d(hidden, feat_ch, 3, padding=1)

    def forward(self, style):
        act = F.relu(self.shared(style))
        return self.gamma(act), self.beta(act)


class StyleHarmonization(nn.Module):
    """Denormalization with alpha-blended component / memory modulation.

    ``alpha_raw`` holds one unconstrained parameter per class; the blend
    weight is ``sigmoid(alpha_raw)`` (0.5 at init). A weight of 1 uses the
    component style only, 0 the memory style only.
    """

    def __init__(self, feat_ch, style_ch, num_classes, hidden=None):
        super().__init__()
        hidden = hidden or feat_ch
        self.comp = Modulation(style_ch, feat_ch, hidden)
        self.mem = Modulation(style_ch, feat_ch, hidden)
        self.alpha_raw = nn.Parameter(torch.zeros(num_classes))

    @property
    def alpha(self):
        return torch.sigmoid(self.alpha_raw)

    def blend(self, comp, mem, mask):
        a = alpha_mask(self.alpha, mask).unsqueeze(1)
        gx, bx = self.comp(comp)
        gy, by = self.mem(mem)
        return a * gx + (1 - a) * gy, a * bx + (1 - a) * by

    def forward(self, f, comp, mem, mask):
        if not (f.shape[-2:] == comp.shape[-2:] == mem.shape[-2:] == mask.shape[-2:]):
            raise ValueError(
                f"spatial sizes differ: feature {tuple(f.shape[-2:])}, component "
                f"{tuple(comp.shape[-2:])}, memory {tuple(mem.shape[-2:])}, mask "
                f"{tuple(mask.shape[-2:])}")
        gamma, beta = self.blend(comp, mem, mask)
        return denormalize(f, gamma, beta)


def _match(f, comp, mem, mask):
    # Styles live at encoder resolution; resample if a block runs elsewhere.
    size = f.shape[-2:]
    if comp.shape[-2:] != size:
        comp = F.interpolate(comp, size=size, mode="bilinear", align_corners=False)
    if mem.shape[-2:] != size:
        mem = F.interpolate(mem, size=size, mode="bilinear", align_corners=False)
    if mask.shape[-2:] != size:
        mask = F.interpolate(mask[:, None].float(), size=size, mode="nearest")[:, 0].long()
    return comp, mem, mask


class SHResBlock(nn.Module):
    """``f + conv(relu(SHL(conv(relu(SHL(f))))))`` with 3x3 convolutions."""

    def __init__(self, ch, style_ch, num_classes, padding_mode="reflect"):
        super().__init__()
        self.shl1 = StyleHarmonization(ch, style_ch, num_classes)
        self.conv1 = ConvBlock(ch, ch, 3, 1, 1, norm=None, act=None, padding_mode=padding_mode)
        self.shl2 = StyleHarmonization(ch, style_ch, num_classes)
        self.conv2 = ConvBlock(ch, ch, 3, 1, 1, norm=None, act=None, padding_mode=padding_mode)

    def forward(self, f, comp, mem, mask):
        comp, mem, mask = _match(f, comp, mem, mask)
        h = self.conv1(F.relu(self.shl1(f, comp, mem, mask)))
        h = self.conv2(F.relu(self.shl2(h, comp, mem, mask)))
        return f + h
