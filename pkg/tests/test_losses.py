import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from shunit.losses import (LossWeights, NonFiniteLossError, adversarial_terms,
                           content_contrastive, info_nce, reconstruction_l1,
                           style_contrastive, total_loss)

from . import oracles

TAU = 0.7
# -2 log(e^(1/tau) / (e^(1/tau) + 1)), two orthonormal pixels
TWO_PIXEL = 0.4296598355718121
# 4 * -log(e^(1/tau) / (e^(1/tau) + 3)), four orthonormal pixels
FOUR_PIXEL = 2.166861792597093


def _map(vectors, h, w):
    """list of hw pixel vectors -> [C, h, w] tensor (row-major pixels)."""
    return torch.tensor(vectors, dtype=torch.float64).T.reshape(-1, h, w)


def test_frozen_constants_match_closed_forms():
    assert TWO_PIXEL == pytest.approx(-2 * math.log(math.exp(1 / TAU) / (math.exp(1 / TAU) + 1)))
    assert FOUR_PIXEL == pytest.approx(
        -4 * math.log(math.exp(1 / TAU) / (math.exp(1 / TAU) + 3)))


def test_info_nce_single_pixel_is_zero():
    x = torch.randn(5, 1, 1)
    assert float(info_nce(x, torch.randn(5, 1, 1))) == 0.0


@pytest.mark.parametrize("hw", [(1, 2), (2, 2), (4, 4)])
def test_info_nce_uniform(hw):
    h, w = hw
    x = torch.ones(3, h, w, dtype=torch.float64)
    n = h * w
    assert float(info_nce(x, x, TAU)) == pytest.approx(n * math.log(n), abs=1e-4)


def test_info_nce_two_orthogonal_pixels():
    a = _map([[1.0, 0.0], [0.0, 1.0]], 1, 2)
    assert float(info_nce(a, a, TAU)) == pytest.approx(TWO_PIXEL, abs=1e-3)
    # normalization makes the scale irrelevant
    assert float(info_nce(3 * a, 0.5 * a, TAU)) == pytest.approx(TWO_PIXEL, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_info_nce_matches_scalar_oracle(seed, normalize):
    g = torch.Generator().manual_seed(seed)
    a = torch.randn(3, 2, 3, generator=g, dtype=torch.float64)
    p = torch.randn(3, 2, 3, generator=g, dtype=torch.float64)
    pix = lambda t: t.reshape(3, -1).T.tolist()
    expected = oracles.info_nce(pix(a), pix(p), TAU, normalize)
    got = float(info_nce(a, p, TAU, normalize))
    assert got == pytest.approx(expected, abs=1e-9)
    assert got >= 0
    mean = float(info_nce(a, p, TAU, normalize, reduction="mean"))
    assert mean == pytest.approx(expected / 6, abs=1e-9)


def test_info_nce_batch_is_mean_of_samples_and_permutation_equivariant():
    g = torch.Generator().manual_seed(0)
    a = torch.randn(4, 3, 2, 2, generator=g, dtype=torch.float64)
    p = torch.randn(4, 3, 2, 2, generator=g, dtype=torch.float64)
    per = [float(info_nce(a[i], p[i])) for i in range(4)]
    assert float(info_nce(a, p)) == pytest.approx(np.mean(per))
    perm = torch.tensor([2, 0, 3, 1])
    assert float(info_nce(a[perm], p[perm])) == pytest.approx(float(info_nce(a, p)))


def test_info_nce_errors():
    with pytest.raises(ValueError):
        info_nce(torch.zeros(2, 2, 2), torch.zeros(2, 2, 3))
    with pytest.raises(ValueError):
        info_nce(torch.zeros(2, 2, 2), torch.zeros(2, 2, 2), tau=0.0)


def test_info_nce_negative_sampling_path():
    g = torch.Generator().manual_seed(0)
    a = torch.randn(1, 4, 4, 4, generator=g)
    # sampling every other pixel exactly: compare against the full path on the same data
    full = float(info_nce(a, a, max_negatives=4096))
    sampled = float(info_nce(a, a, max_negatives=8, generator=torch.Generator().manual_seed(1)))
    assert math.isfinite(sampled) and 0 <= sampled <= full


def test_info_nce_gradient_finite_differences():
    g = torch.Generator().manual_seed(2)
    a = torch.randn(2, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    p = torch.randn(2, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda x, y: info_nce(x, y, TAU), (a, p),
                                    eps=1e-6, atol=1e-8, rtol=1e-3)


def test_content_contrastive_orthogonal_2x2():
    eye = _map(np.eye(4).tolist(), 2, 2)
    w = LossWeights(reduction="sum")
    assert float(content_contrastive(eye, eye, w)) == pytest.approx(FOUR_PIXEL, abs=1e-3)
    assert float(content_contrastive(eye, eye, LossWeights())) == pytest.approx(FOUR_PIXEL / 4)
    single = torch.randn(4, 1, 1)
    assert float(content_contrastive(single, single, w)) == 0.0


def test_content_contrastive_permuted_positives_cost_more():
    eye = _map(np.eye(4).tolist(), 2, 2)
    shuffled = _map(np.eye(4)[[1, 0, 3, 2]].tolist(), 2, 2)
    w = LossWeights(reduction="sum")
    aligned = float(content_contrastive(eye, eye, w))
    permuted = float(content_contrastive(eye, shuffled, w))
    expected = oracles.info_nce(np.eye(4).tolist(), np.eye(4)[[1, 0, 3, 2]].tolist(), TAU)
    assert permuted == pytest.approx(expected, abs=1e-9)
    assert permuted > aligned


def test_style_contrastive_cases():
    w = LossWeights(reduction="sum")
    s = torch.randn(6, 1, 1)
    assert float(style_contrastive(s, s, w)) == 0.0
    a = _map([[1.0, 0.0], [0.0, 1.0]], 1, 2)
    assert float(style_contrastive(a, a, w)) == pytest.approx(TWO_PIXEL, abs=1e-5)


def test_reconstruction_l1():
    a = torch.randn(3, 4, 4)
    assert float(reconstruction_l1(a, a)) == 0.0
    assert float(reconstruction_l1(torch.ones(3, 4, 4), -torch.ones(3, 4, 4))) == 2.0
    g = torch.Generator().manual_seed(0)
    x, y = torch.rand(3, 5, 5, generator=g), torch.rand(3, 5, 5, generator=g)
    brute = sum(abs(u - v) for u, v in zip(x.flatten().tolist(), y.flatten().tolist())) / 75
    assert float(reconstruction_l1(x, y)) == pytest.approx(brute, abs=1e-7)
    with pytest.raises(ValueError):
        reconstruction_l1(x, y[:, :4])


def test_adversarial_analytic_values():
    real, fake = [torch.full((1, 1, 2, 2), 20.0)], [torch.full((1, 1, 2, 2), -20.0)]
    assert float(adversarial_terms(real, fake, "discriminator")) <= 1e-6
    z = [torch.zeros(1, 1, 2, 2), torch.zeros(1, 1, 1, 1)]
    assert float(adversarial_terms(z, z, "discriminator")) == pytest.approx(2 * math.log(2),
                                                                            abs=1e-4)
    assert float(adversarial_terms(None, z, "generator")) == pytest.approx(math.log(2), abs=1e-4)
    assert float(adversarial_terms(None, z, "generator", non_saturating=False)) == pytest.approx(
        -math.log(2), abs=1e-4)
    # extreme logits stay finite
    big = [torch.full((1, 1, 2, 2), 1e4)]
    assert math.isfinite(float(adversarial_terms(big, big, "discriminator")))
    with pytest.raises(ValueError):
        adversarial_terms(z, z, "critic")


def test_total_loss_examples():
    w = LossWeights()
    zeros = {k: torch.tensor(0.0) for k in ("self", "cycle", "perc", "adv", "content", "style")}
    total, report = total_loss(zeros, w)
    assert float(total) == 0.0 and report.total == 0.0
    ones = {k: torch.tensor(1.0) for k in zeros}
    total, report = total_loss(ones, w)
    assert float(total) == 42.0 and report.total == 42.0
    single = dict(zeros, perc=torch.tensor(2.5))
    assert float(total_loss(single, w)[0]) == 2.5 * w.perc


def test_total_loss_rejects_nan():
    terms = {"self": torch.tensor(1.0), "style": torch.tensor(float("nan"))}
    with pytest.raises(NonFiniteLossError, match="style") as info:
        total_loss(terms, LossWeights(), iteration=7)
    assert info.value.iteration == 7


def test_zero_weight_term_has_no_gradient():
    x = torch.tensor(2.0, requires_grad=True)
    y = torch.tensor(3.0, requires_grad=True)
    w = LossWeights(style=0.0)
    total, report = total_loss({"self": x * 1.0, "style": y * y}, w)
    total.backward()
    assert y.grad is None and x.grad == w.self
    assert report.terms["style"] == 9.0 and report.weights["style"] == 0.0


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(tau=0)
    with pytest.raises(ValueError):
        LossWeights(adv=-1)
