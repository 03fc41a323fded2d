"""Class-wise and global Fréchet distances on region-pooled features.

For cFID the extractor's first block is run on each image, the feature map
is bilinearly upsampled back to the image size, and each class present in
the ground-truth mask (with at least ``min_pixels`` pixels) contributes one
embedding per image: the mean feature vector over its region. A Gaussian
is fitted per class and per image set, the Fréchet distance is taken per
class, and cFID is the mean over classes usable on both sides.
"""

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F


class MetricUndefinedError(ValueError):
    pass


@dataclass
class GaussianStats:
    count: int
    mean: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_samples(cls, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise MetricUndefinedError("need at least 2 samples for a covariance")
        return cls(x.shape[0], x.mean(0), np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1]))


@dataclass
class CFIDReport:
    per_class: dict                  # class id -> distance
    mean: float
    skipped: dict = field(default_factory=dict)   # class id -> reason

    def lines(self):
        out = [f"{n},{d:.10g}" for n, d in sorted(self.per_class.items())]
        out.append(f"mean,{self.mean:.10g}")
        return out


def sqrtm_psd(a):
    """Square root of a symmetric positive semi-definite matrix via ``eigh``."""
    a = (np.asarray(a, dtype=np.float64) + np.asarray(a, dtype=np.float64).T) / 2
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(p, q, eps=1e-6):
    """``|mu_p - mu_q|^2 + Tr(S_p + S_q - 2 (S_p S_q)^(1/2))``, clipped at 0.

    ``eps * I`` is added to both covariances. The trace of the cross term is
    taken from the symmetric matrix ``S_p^(1/2) S_q S_p^(1/2)``, which has the
    same eigenvalues as ``S_p S_q``.
    """
    mu_p, mu_q = np.atleast_1d(p.mean), np.atleast_1d(q.mean)
    if mu_p.shape != mu_q.shape:
        raise ValueError(f"dimension mismatch: {mu_p.shape} vs {mu_q.shape}")
    d = mu_p.shape[0]
    eye = np.eye(d)
    sp = np.atleast_2d(p.covariance) + eps * eye
    sq = np.atleast_2d(q.covariance) + eps * eye
    root_p = sqrtm_psd(sp)
    cross = sqrtm_psd(root_p @ sq @ root_p)
    diff = mu_p - mu_q
    dist = diff @ diff + np.trace(sp) + np.trace(sq) - 2.0 * np.trace(cross)
    if not np.isfinite(dist):
        raise MetricUndefinedError(
            f"non-finite Fréchet distance (condition numbers {np.linalg.cond(sp):.3g}, "
            f"{np.linalg.cond(sq):.3g})")
    return max(float(dist), 0.0)


def _features(extractor):
    return extractor.first_block if hasattr(extractor, "first_block") else extractor


@torch.no_grad()
def upsampled_features(image, extractor):
    """First-block features bilinearly resized to the image size, ``[D, H, W]``."""
    batch = image.unsqueeze(0) if image.dim() == 3 else image
    feat = _features(extractor)(batch)
    feat = F.interpolate(feat, size=batch.shape[-2:], mode="bilinear", align_corners=False)
    return feat[0] if image.dim() == 3 else feat


def extract_class_embeddings(image, mask, extractor, min_pixels=16):
    """``{class id: mean feature vector}`` for classes with ``>= min_pixels`` pixels."""
    feat = upsampled_features(image, extractor).double()
    out = {}
    for n in mask.unique().tolist():
        region = mask == n
        if int(region.sum()) < min_pixels:
            continue
        out[n] = feat[:, region].mean(1).numpy()
    return out


def class_embedding_sets(samples, extractor, min_pixels=16):
    """Collect per-class embedding lists over ``(image, mask)`` pairs."""
    sets = {}
    for image, mask in samples:
        for n, v in extract_class_embeddings(image, mask, extractor, min_pixels).items():
            sets.setdefault(n, []).append(v)
    return sets


def cfid(generated, reference, extractor, min_pixels=16, eps=1e-6):
    """Mean per-class Fréchet distance between two sets of ``(image, mask)`` pairs."""
    generated, reference = list(generated), list(reference)
    if not generated or not reference:
        raise MetricUndefinedError("both image sets must be nonempty")
    gen = class_embedding_sets(generated, extractor, min_pixels)
    ref = class_embedding_sets(reference, extractor, min_pixels)
    per_class, skipped = {}, {}
    for n in sorted(gen.keys() | ref.keys()):
        g, r = gen.get(n, []), ref.get(n, [])
        if len(g) < 2 or len(r) < 2:
            skipped[n] = f"{len(g)} generated / {len(r)} reference embeddings"
            continue
        per_class[n] = frechet_distance(
            GaussianStats.from_samples(g), GaussianStats.from_samples(r), eps)
    if not per_class:
        raise MetricUndefinedError("no class is usable in both image sets")
    return CFIDReport(per_class, float(np.mean(list(per_class.values()))), skipped)


def global_fid(generated, reference, extractor, eps=1e-6):
    """Fréchet distance on one spatially pooled embedding per image."""
    def pooled(images):
        return [upsampled_features(im, extractor).double().mean((-2, -1)).numpy()
                for im in images]

    g, r = pooled(generated), pooled(reference)
    if len(g) < 2 or len(r) < 2:
        raise MetricUndefinedError("need at least 2 images per set")
    return frechet_distance(GaussianStats.from_samples(g), GaussianStats.from_samples(r), eps)
