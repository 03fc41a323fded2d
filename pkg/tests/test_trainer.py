import hashlib
import json

import numpy as np
import pytest
import torch
from safetensors.torch import load_file, save_file

from shunit import RunConfig, Trainer, generate_synthetic
from shunit.data import DomainSample
from shunit.losses import NonFiniteLossError
from shunit.trainer import CHECKPOINT_VERSION, CheckpointError


def tiny(**kw):
    base = dict(width_factor=0.0625, disc_scales=1, synth_canvas_size=16, synth_min_rect=4,
                synth_max_rect=8, slots_per_class="4", batch_size=2)
    base.update(kw)
    return RunConfig(**base)


def data(cfg, count=4):
    spec = cfg.synthetic_spec()
    return generate_synthetic(spec, count, "X"), generate_synthetic(spec, count, "Y")


def _digest(params):
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


def _loss_rows(reports):
    return np.array([[v for _, v in r.rows()] for r in reports])


def test_identical_seeds_identical_reports():
    cfg = tiny()
    x, y = data(cfg)
    a = _loss_rows(Trainer(cfg).fit(x, y, 3))
    b = _loss_rows(Trainer(cfg).fit(x, y, 3))
    np.testing.assert_allclose(a, b, atol=1e-6, rtol=0)


def test_report_itemizes_every_term():
    cfg = tiny()
    x, y = data(cfg)
    report = Trainer(cfg).fit(x, y, 1)[0]
    assert set(report.terms) == {"self", "cycle", "perc", "adv", "content", "style"}
    assert set(report.disc) == {"adv_X", "adv_Y"}
    assert report.total == pytest.approx(
        sum(report.weights[k] * v for k, v in report.terms.items()))


def test_backprop_memory_receives_gradient():
    cfg = tiny()
    x, y = data(cfg)
    for r in Trainer(cfg).fit(x, y, 3):
        for d in "XY":
            assert r.diagnostics[f"grad.memory.{d}.keys"] > 0
            assert r.diagnostics[f"grad.memory.{d}.values"] > 0


def test_update_mode_blocks_gradient_but_moves_bank():
    cfg = tiny(memory_mode="update")
    x, y = data(cfg)
    t = Trainer(cfg)
    before = t.model.memory["X"].values.clone()
    for r in t.fit(x, y, 3):
        for d in "XY":
            assert r.diagnostics[f"grad.memory.{d}.keys"] == 0.0
            assert r.diagnostics[f"grad.memory.{d}.values"] == 0.0
    assert not torch.equal(before, t.model.memory["X"].values)


def test_self_reconstruction_fits_one_image():
    cfg = tiny(lambda_adv=0.0, lambda_perc=0.0, batch_size=1)
    x, y = data(cfg, 1)
    v = np.array([r.terms["self"] for r in Trainer(cfg).fit(x, y, 50)])
    windows = v.reshape(5, 10).mean(1)
    assert np.all(np.diff(windows) < 0)
    assert v[-1] < v[0]


def test_discriminator_and_generator_steps_are_isolated():
    cfg = tiny()
    x, y = data(cfg)
    t = Trainer(cfg)
    gen_params = list(t.model.generator_parameters())
    dis_params = list(t.model.disc.parameters())
    seen = {}

    def wrap(opt, own, other, tag):
        step = opt.step

        def checked(*a, **kw):
            own_before, other_before = _digest(own), _digest(other)
            out = step(*a, **kw)
            seen[tag] = (own_before != _digest(own), other_before == _digest(other))
            return out

        opt.step = checked

    wrap(t.opt_dis, dis_params, gen_params, "dis")
    wrap(t.opt_gen, gen_params, dis_params, "gen")
    t.train_step(t.sample_batch(x), t.sample_batch(y))
    assert seen == {"dis": (True, True), "gen": (True, True)}
    assert not any(p.requires_grad for p in t.model.perc.parameters())


def test_translate_contract():
    cfg = tiny()
    x, _ = data(cfg, 1)
    t = Trainer(cfg)
    before = _digest(t.model.parameters())
    out = t.translate(x[0], "XY")
    assert out.shape == x[0].image.shape
    assert torch.equal(out, t.translate(x[0], "XY"))
    assert t.translate(x[0], "YX").shape == out.shape
    assert _digest(t.model.parameters()) == before
    bad = DomainSample(x[0].image, torch.full_like(x[0].mask, 5), "X", "bad")
    with pytest.raises(ValueError, match="out of range"):
        t.translate(bad, "XY")
    with pytest.raises(ValueError):
        t.translate(x[0], "XZ")


def test_nan_loss_aborts_with_term_and_iteration():
    cfg = tiny()
    x, y = data(cfg)
    t = Trainer(cfg)
    t.fit(x, y, 1)
    with torch.no_grad():
        t.model.memory["Y"].values.fill_(float("nan"))
    with pytest.raises(NonFiniteLossError) as info:
        t.fit(x, y, 1)
    assert info.value.iteration == 1


# -- checkpoints ---------------------------------------------------------


def test_checkpoint_round_trip_byte_identical(tmp_path):
    cfg = tiny()
    x, y = data(cfg)
    t = Trainer(cfg)
    t.fit(x, y, 2)
    a = t.save_checkpoint(tmp_path / "a.safetensors")
    loaded = Trainer.load_checkpoint(a)
    b = loaded.save_checkpoint(tmp_path / "b.safetensors")
    assert a.read_bytes() == b.read_bytes()
    assert loaded.iteration == 2
    for k, v in t.model.state_dict().items():
        assert torch.equal(v, loaded.model.state_dict()[k])


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg = tiny()
    x, y = data(cfg)
    full = _loss_rows(Trainer(cfg).fit(x, y, 4))
    t = Trainer(cfg)
    first = _loss_rows(t.fit(x, y, 2))
    path = t.save_checkpoint(tmp_path / "mid.safetensors")
    torch.manual_seed(999)  # clobber global RNG; the checkpoint must restore it
    resumed = Trainer.load_checkpoint(path)
    second = _loss_rows(resumed.fit(x, y, 2))
    np.testing.assert_allclose(np.vstack([first, second]), full, atol=1e-6, rtol=0)
    assert resumed.iteration == 4


def test_checkpoint_names():
    names = set(Trainer(tiny()).state_tensors())
    assert "gen.X.blocks.0.shl1.alpha_raw" in names
    assert "memory.Y.keys" in names and "memory.Y.values" in names
    assert any(n.startswith("disc.X.scales.0.") for n in names)
    assert any(n.startswith("perc.") for n in names)
    assert any(n.startswith("optim.gen.") for n in names) is False  # no moments before a step


def test_corrupt_checkpoint(tmp_path):
    path = tmp_path / "bad.safetensors"
    path.write_bytes(b"\x00garbage" * 10)
    with pytest.raises(CheckpointError):
        Trainer.load_checkpoint(path)
    with pytest.raises(CheckpointError):
        Trainer.load_checkpoint(tmp_path / "missing.safetensors")
    good = Trainer(tiny()).save_checkpoint(tmp_path / "good.safetensors")
    raw = good.read_bytes()
    (tmp_path / "cut.safetensors").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        Trainer.load_checkpoint(tmp_path / "cut.safetensors")


def test_version_mismatch(tmp_path):
    path = Trainer(tiny()).save_checkpoint(tmp_path / "ck.safetensors")
    tensors = load_file(str(path))
    from safetensors import safe_open
    with safe_open(str(path), "pt") as fh:
        meta = json.loads(fh.metadata()["shunit"])
    meta["version"] = CHECKPOINT_VERSION + 1
    save_file(tensors, str(path), metadata={"shunit": json.dumps(meta)})
    with pytest.raises(CheckpointError, match="version"):
        Trainer.load_checkpoint(path)


# -- ablation toggles ----------------------------------------------------


@pytest.mark.parametrize("changes,zero_terms", [
    ({"lambda_content": 0.0}, {"content"}),
    ({"lambda_style": 0.0}, {"style"}),
    ({"lambda_content": 0.0, "lambda_style": 0.0}, {"content", "style"}),
])
def test_disabled_terms_carry_zero_weight(changes, zero_terms):
    cfg = tiny(**changes)
    x, y = data(cfg)
    r = Trainer(cfg).fit(x, y, 1)[0]
    assert {k for k, w in r.weights.items() if w == 0} == zero_terms
    assert r.total == pytest.approx(sum(r.weights[k] * v for k, v in r.terms.items()))


def test_style_off_keeps_memory_trainable():
    # without the style term the memory still feeds the generator, so keys
    # and values keep receiving gradient from the reconstruction terms
    cfg = tiny(lambda_style=0.0)
    x, y = data(cfg)
    r = Trainer(cfg).fit(x, y, 1)[0]
    assert r.diagnostics["grad.memory.X.values"] > 0


def test_term_gradient_norms_follow_weights():
    cfg = tiny(lambda_content=0.0)
    x, y = data(cfg)
    t = Trainer(cfg)
    before = _digest(t.model.parameters())
    norms = t.term_gradient_norms(t.sample_batch(x), t.sample_batch(y))
    assert norms["content"] == 0.0
    assert all(norms[k] > 0 for k in ("self", "cycle", "perc", "adv", "style"))
    assert _digest(t.model.parameters()) == before


def test_l1_mode_changes_feature_terms():
    cfg = tiny()
    x, y = data(cfg)
    nce = Trainer(cfg).fit(x, y, 1)[0]
    l1 = Trainer(cfg.replace(l1_mode=True)).fit(x, y, 1)[0]
    assert nce.terms["self"] == pytest.approx(l1.terms["self"], abs=1e-6)
    assert nce.terms["content"] != pytest.approx(l1.terms["content"])


def test_label_input_toggle_runs():
    cfg = tiny(use_label_input=False)
    x, y = data(cfg)
    t = Trainer(cfg)
    assert t.model.enc_c["X"].label_branch is None
    assert np.isfinite(t.fit(x, y, 1)[0].total)
