"""Class-wise key-value style memory.

Every class ``n`` owns ``U_n`` (key, value) slots. A content pixel of class
``n`` attends over the keys of its own class only, with softmax weights
over cosine similarities, and reads back the weighted sum of the values.

The bank is normally an ordinary trainable parameter set. ``mode="update"``
reproduces the older write-back scheme instead: slots are moved toward
attention-weighted input features and receive no gradient.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

COS_EPS = 1e-8


@dataclass
class ReadResult:
    memory_style: torch.Tensor  # [B, C_s, h, w]
    weights: torch.Tensor       # [B, U, h, w]; zero on padded slots


def cosine_similarity(a, b, eps=COS_EPS):
    """``a . b / (max(|a|, eps) * max(|b|, eps))`` along the last axis."""
    na = a.norm(dim=-1).clamp_min(eps)
    nb = b.norm(dim=-1).clamp_min(eps)
    return (a * b).sum(-1) / (na * nb)


def _flatten(x):
    b, c, h, w = x.shape
    return x.permute(0, 2, 3, 1).reshape(b * h * w, c)


def read(content, mask, keys, values, slot_mask=None):
    """Read the memory style for every pixel of ``content``.

    content : ``[B, C_c, h, w]``; mask : ``[B, h, w]`` class indices at the
    same resolution; keys ``[N, U, C_c]``; values ``[N, U, C_s]``;
    slot_mask : optional bool ``[N, U]``, False marks unused padding slots.
    """
    if keys.shape[1] == 0:
        raise ValueError("memory bank has no slots")
    if content.dim() != 4 or mask.dim() != 3:
        raise ValueError("expected content [B, C, h, w] and mask [B, h, w]")
    if content.shape[-2:] != mask.shape[-2:] or content.shape[0] != mask.shape[0]:
        raise ValueError(
            f"mask {tuple(mask.shape)} does not match content {tuple(content.shape)}")
    n_cls, n_slots, _ = keys.shape
    if bool((mask < 0).any()) or bool((mask >= n_cls).any()):
        raise ValueError(f"mask holds class indices outside [0, {n_cls})")

    b, _, h, w = content.shape
    flat = _flatten(content)
    labels = mask.reshape(-1)
    out = flat.new_zeros(flat.shape[0], values.shape[-1])
    weights = flat.new_zeros(flat.shape[0], n_slots)
    # One independent read per class: class-n pixels never touch other slots.
    for n in labels.unique().tolist():
        idx = (labels == n).nonzero().squeeze(1)
        sim = cosine_similarity(flat[idx].unsqueeze(1), keys[n].unsqueeze(0))
        if slot_mask is not None:
            sim = sim.masked_fill(~slot_mask[n], float("-inf"))
        wn = torch.softmax(sim, dim=1)
        out = out.index_copy(0, idx, wn @ values[n])
        weights = weights.index_copy(0, idx, wn)
    memory_style = out.reshape(b, h, w, -1).permute(0, 3, 1, 2)
    weights = weights.reshape(b, h, w, n_slots).permute(0, 3, 1, 2)
    return ReadResult(memory_style, weights)


class StyleMemory(nn.Module):
    """Per-domain bank of ``num_classes`` x ``slots`` learnable key/value pairs.

    ``slots`` is an int (same count for every class) or a per-class list;
    uneven lists are padded to the largest count and the padding is masked
    out of the softmax.
    """

    def __init__(self, num_classes, key_dim, value_dim, slots=20, mode="backprop",
                 init_std=0.02):
        super().__init__()
        if mode not in ("backprop", "update"):
            raise ValueError(f"unknown memory mode {mode!r}")
        per_class = [slots] * num_classes if isinstance(slots, int) else list(slots)
        if len(per_class) != num_classes:
            raise ValueError("need one slot count per class")
        if min(per_class) < 1:
            raise ValueError("every class needs at least one slot")
        u = max(per_class)
        self.num_classes = num_classes
        self.slots = per_class
        self.mode = mode
        self.keys = nn.Parameter(torch.randn(num_classes, u, key_dim) * init_std)
        self.values = nn.Parameter(torch.randn(num_classes, u, value_dim) * init_std)
        slot_mask = torch.arange(u)[None, :] < torch.tensor(per_class)[:, None]
        self.register_buffer("slot_mask", slot_mask, persistent=False)
        if mode == "update":
            self.keys.requires_grad_(False)
            self.values.requires_grad_(False)

    @property
    def uniform(self):
        return len(set(self.slots)) == 1

    def forward(self, content, mask):
        keys, values = self.keys, self.values
        if self.mode == "update":
            keys, values = keys.detach(), values.detach()
        return read(content, mask, keys, values, None if self.uniform else self.slot_mask)

    @torch.no_grad()
    def legacy_update(self, content, style, mask, rate):
        """Move slots toward the attention-weighted mean of input features.

        For class ``n`` and slot ``j`` with read weights ``w_ij`` over the
        class-n pixels ``i``: ``k_j <- (1 - rate) k_j + rate * sum_i w_ij c_i / sum_i w_ij``,
        and likewise for values with the component style. Slots of classes
        absent from ``mask`` are left alone.
        """
        if self.mode != "update":
            raise RuntimeError("legacy_update requires a memory in 'update' mode")
        if not 0.0 <= rate <= 1.0:
            raise ValueError("rate must lie in [0, 1]")
        if rate == 0.0:
            return self
        weights = self(content, mask).weights
        c, s = _flatten(content), _flatten(style)
        wf = _flatten(weights)
        labels = mask.reshape(-1)
        for n in labels.unique().tolist():
            idx = (labels == n).nonzero().squeeze(1)
            wn = wf[idx]                      # [p, U]
            total = wn.sum(0)                 # [U]
            live = (total > 0) & self.slot_mask[n]
            if not bool(live.any()):
                continue
            denom = total[live].unsqueeze(1)
            key_target = (wn[:, live].T @ c[idx]) / denom
            value_target = (wn[:, live].T @ s[idx]) / denom
            self.keys[n, live] = (1 - rate) * self.keys[n, live] + rate * key_target
            self.values[n, live] = (1 - rate) * self.values[n, live] + rate * value_target
        return self
