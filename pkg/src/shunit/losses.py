"""Training objectives.

``info_nce`` is the shared kernel of the content and style contrastive
terms: for pixel ``i`` the positive pair is ``(anchor_i, positive_i)`` and
every other anchor pixel ``j`` is a negative,

    -sum_i log( exp(a_i . p_i / tau) / sum_j exp(a_j . p_i / tau) ).
"""

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

TERMS = ("self", "cycle", "perc", "adv", "content", "style")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, term, iteration=None):
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"loss term {term!r} is not finite{where}")
        self.term = term
        self.iteration = iteration


@dataclass
class LossWeights:
    self: float = 10.0
    cycle: float = 10.0
    perc: float = 1.0
    adv: float = 1.0
    content: float = 10.0
    style: float = 10.0
    tau: float = 0.7
    normalize: bool = True
    # "mean" over pixels keeps the weights resolution independent; "sum"
    # is the literal InfoNCE sum.
    reduction: str = "mean"
    max_negatives: int = 4096
    l1_mode: bool = False
    non_saturating: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        for name in TERMS:
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name!r} must be nonnegative")
        if self.reduction not in ("mean", "sum"):
            raise ValueError("reduction must be 'mean' or 'sum'")

    def as_dict(self):
        return {name: getattr(self, name) for name in TERMS}


@dataclass
class LossReport:
    terms: dict                       # term name -> float
    weights: dict                     # term name -> lambda
    total: float
    disc: dict = field(default_factory=dict)
    disc_total: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        """Flat ``(name, value)`` pairs for logging."""
        out = [(f"gen.{k}", v) for k, v in self.terms.items()]
        out.append(("gen.total", self.total))
        out += [(f"disc.{k}", v) for k, v in self.disc.items()]
        out.append(("disc.total", self.disc_total))
        return out


def _pixels(x):
    if x.dim() == 3:
        x = x.unsqueeze(0)
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(1, 2)  # [B, hw, C]


def info_nce(anchors, positives, tau=0.7, normalize=True, reduction="sum",
             max_negatives=4096, generator=None):
    """Pixel-wise InfoNCE over ``[C, h, w]`` or ``[B, C, h, w]`` maps.

    Per-sample losses are summed (or averaged, ``reduction="mean"``) over
    pixels and then averaged over the batch. With more than
    ``max_negatives`` pixels, each query sees its positive plus
    ``max_negatives - 1`` uniformly sampled negatives.
    """
    if anchors.shape != positives.shape:
        raise ValueError(
            f"anchor {tuple(anchors.shape)} and positive {tuple(positives.shape)} shapes differ")
    if tau <= 0:
        raise ValueError("tau must be positive")
    a, p = _pixels(anchors), _pixels(positives)
    if normalize:
        a = F.normalize(a, dim=-1, eps=1e-8)
        p = F.normalize(p, dim=-1, eps=1e-8)
    b, hw, _ = a.shape
    if hw <= max_negatives:
        # logits[b, i, j] = p_i . a_j / tau; the target for query i is j = i.
        logits = p @ a.transpose(1, 2) / tau
        target = torch.arange(hw).expand(b, hw)
        per_pixel = F.cross_entropy(logits.reshape(b * hw, hw), target.reshape(-1),
                                    reduction="none").reshape(b, hw)
    else:
        k = max_negatives - 1
        # Offsets in [1, hw) never hit the query's own index.
        offs = torch.randint(1, hw, (hw, k), generator=generator)
        neg_idx = (torch.arange(hw)[:, None] + offs) % hw
        pos = (p * a).sum(-1, keepdim=True)                     # [B, hw, 1]
        neg = torch.einsum("bic,bikc->bik", p, a[:, neg_idx])   # [B, hw, k]
        logits = torch.cat([pos, neg], dim=-1) / tau
        per_pixel = -torch.log_softmax(logits, dim=-1)[..., 0]
    per_sample = per_pixel.sum(1) if reduction == "sum" else per_pixel.mean(1)
    return per_sample.mean()


def content_contrastive(c_src, c_trans, weights):
    """Source content is the anchor; the re-encoded translation is the query."""
    return info_nce(c_src, c_trans, weights.tau, weights.normalize, weights.reduction,
                    weights.max_negatives)


def style_contrastive(s_comp, s_mem, weights):
    """Component style is the anchor; the memory style read back is the query."""
    return info_nce(s_comp, s_mem, weights.tau, weights.normalize, weights.reduction,
                    weights.max_negatives)


def reconstruction_l1(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def _mean_over_scales(maps, fn):
    return sum(fn(m).mean() for m in maps) / len(maps)


def adversarial_terms(real_logits, fake_logits, side, non_saturating=True):
    """Vanilla GAN loss in log-sigmoid form, averaged over patches and scales.

    ``side="discriminator"``: ``-[log D(real) + log(1 - D(fake))]`` (``real_logits``
    is required). ``side="generator"``: ``-log D(fake)`` when
    ``non_saturating``, else ``log(1 - D(fake))``.
    """
    if not isinstance(fake_logits, (list, tuple)):
        fake_logits = [fake_logits]
    if side == "discriminator":
        if not isinstance(real_logits, (list, tuple)):
            real_logits = [real_logits]
        # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
        return (_mean_over_scales(real_logits, lambda x: F.softplus(-x))
                + _mean_over_scales(fake_logits, F.softplus))
    if side == "generator":
        if non_saturating:
            return _mean_over_scales(fake_logits, lambda x: F.softplus(-x))
        return _mean_over_scales(fake_logits, lambda x: -F.softplus(x))
    raise ValueError(f"side must be 'generator' or 'discriminator', got {side!r}")


def total_loss(terms, weights, iteration=None):
    """Weighted sum of the generator terms.

    ``terms`` maps names from ``TERMS`` to scalar tensors (or floats).
    Terms whose weight is 0 are kept in the report but contribute nothing,
    gradient included. Returns ``(total_tensor, LossReport)``.
    """
    lam = weights.as_dict() if isinstance(weights, LossWeights) else dict(weights)
    total = 0.0
    values = {}
    for name, value in terms.items():
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(name, iteration)
        values[name] = v
        if lam.get(name, 0.0) != 0.0:
            total = total + lam[name] * value
    if not torch.is_tensor(total):
        total = torch.tensor(float(total))
    report = LossReport(values, {k: lam.get(k, 0.0) for k in values},
                        math.fsum(lam.get(k, 0.0) * v for k, v in values.items()))
    return total, report
