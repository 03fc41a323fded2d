"""Closed-form checks for the contrastive loss and the Frechet distance."""

# %%
import math

import numpy as np
import torch

from shunit.losses import LossWeights, info_nce, total_loss
from shunit.metrics import GaussianStats, cfid, frechet_distance
from shunit.networks import PerceptualExtractor

tau = 0.7

# %% InfoNCE on identical vectors: every pixel is as likely as every other,
# so each of the hw queries pays log(hw)
x = torch.ones(8, 4, 4)
print(float(info_nce(x, x, tau)), 16 * math.log(16))

# %% Two orthonormal pixels
a = torch.tensor([[1.0, 0.0], [0.0, 1.0]]).T.reshape(2, 1, 2)
e = math.exp(1 / tau)
print(float(info_nce(a, a, tau)), -2 * math.log(e / (e + 1)))

# %% Default weights add up to 42 on unit terms
ones = {k: torch.tensor(1.0) for k in ("self", "cycle", "perc", "adv", "content", "style")}
print(float(total_loss(ones, LossWeights())[0]))

# %% Frechet distance between commuting Gaussians: |dmu|^2 + |dsigma|^2
p = GaussianStats(2, np.zeros(2), np.diag([1.0, 4.0]))
q = GaussianStats(2, np.array([1.0, 2.0]), np.diag([4.0, 1.0]))
print(frechet_distance(p, q))   # 7

# %% Class-wise FID on images: shifting only class 1 shows up only in class 1
g = torch.Generator().manual_seed(0)


def image_set(shift):
    out = []
    for _ in range(8):
        mask = torch.zeros(16, 16, dtype=torch.long)
        mask[:8] = 1
        img = torch.rand(3, 16, 16, generator=g) * 2 - 1
        out.append((img + shift * (mask == 1), mask))
    return out


report = cfid(image_set(0.8), image_set(0.0), PerceptualExtractor())
print(report.per_class, "mean", report.mean)
