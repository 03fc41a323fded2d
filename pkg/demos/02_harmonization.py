"""Blending two styles with per-class alpha.

A style harmonization layer normalizes a feature map per channel and then
modulates it with scale/shift maps. Two candidate (gamma, beta) pairs come
from the component style and from the memory style; a per-class sigmoid
weight alpha, painted over the label mask, mixes them pixel by pixel.
"""

# %%
import torch

from shunit.harmonization import StyleHarmonization, alpha_mask

torch.manual_seed(0)

# %% The alpha mask is just a lookup of per-class weights
alpha = torch.tensor([0.2, 0.9])
mask = torch.tensor([[0, 0, 1], [1, 1, 0]])
print(alpha_mask(alpha, mask))

# %% A fresh layer starts balanced: every class at 0.5
shl = StyleHarmonization(feat_ch=4, style_ch=3, num_classes=2)
print("initial alphas:", shl.alpha)

f = torch.randn(1, 4, 8, 8)
comp, mem = torch.randn(1, 3, 8, 8), torch.randn(1, 3, 8, 8)
m = torch.zeros(1, 8, 8, dtype=torch.long)
m[..., 4:] = 1
with torch.no_grad():
    out = shl(f, comp, mem, m)

# %% Push class 1 fully toward the component style: its pixels stop
# depending on the memory branch, class-0 pixels are untouched
with torch.no_grad():
    shl.alpha_raw[1] = 30.0
    out_hi = shl(f, comp, mem, m)
    out_hi2 = shl(f, comp, mem + 5.0, m)
print("class-0 pixels unchanged by alpha[1]:", torch.equal(out[..., :4], out_hi[..., :4]))
print("class-1 pixels ignore memory style:",
      float((out_hi2[..., 4:] - out_hi[..., 4:]).abs().max()) < 1e-6)
