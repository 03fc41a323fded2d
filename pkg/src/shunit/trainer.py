"""Dual-direction adversarial training, inference and checkpoints."""

import json
import math
from pathlib import Path

import torch
import torch.nn as nn
from safetensors import SafetensorError, safe_open
from safetensors.torch import load_file, save_file

from .config import RunConfig, parse_config
from .data import DOMAINS, check_mask, downsample_mask, one_hot, stack
from .encoders import ContentEncoder, StyleEncoder
from .losses import (NonFiniteLossError, adversarial_terms, content_contrastive,
                     reconstruction_l1, style_contrastive, total_loss)
from .networks import Generator, MultiScaleDiscriminator, PerceptualExtractor
from .style_memory import StyleMemory

CHECKPOINT_VERSION = 1
FEATURE_STRIDE = 4


class CheckpointError(ValueError):
    pass


def _other(domain):
    return "Y" if domain == "X" else "X"


class SHUNIT(nn.Module):
    """Both translation directions: per-domain encoders, memory, generator, discriminator."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        n, width, pad = cfg.num_classes, cfg.width, cfg.padding
        self.enc_c = nn.ModuleDict(
            {d: ContentEncoder(n, width, cfg.use_label_input, pad) for d in DOMAINS})
        self.enc_s = nn.ModuleDict({d: StyleEncoder(width, pad) for d in DOMAINS})
        c_ch = self.enc_c["X"].out_channels
        s_ch = self.enc_s["X"].out_channels
        self.memory = nn.ModuleDict({
            d: StyleMemory(n, c_ch, s_ch, cfg.slots, cfg.memory_mode, cfg.memory_init_std)
            for d in DOMAINS})
        self.gen = nn.ModuleDict({d: Generator(c_ch, s_ch, n, width, padding_mode=pad)
                                  for d in DOMAINS})
        self.disc = nn.ModuleDict({d: MultiScaleDiscriminator(cfg.disc_scales, width, pad)
                                   for d in DOMAINS})
        self.perc = PerceptualExtractor(cfg.perceptual, cfg.perceptual_seed,
                                        weights=cfg.perceptual_weights or None)

    def generator_parameters(self):
        for name in ("enc_c", "enc_s", "memory", "gen"):
            for p in getattr(self, name).parameters():
                if p.requires_grad:
                    yield p

    def encode(self, domain, image, mask):
        """-> (content, component style, mask at feature resolution)."""
        check_mask(mask, self.cfg.num_classes)
        content = self.enc_c[domain](image, one_hot(mask, self.cfg.num_classes).to(image.dtype))
        return content, self.enc_s[domain](image), downsample_mask(mask, FEATURE_STRIDE)

    def translate(self, image, mask, direction):
        """Full encode -> memory read -> generate pipeline for ``direction`` "XY" or "YX"."""
        src, tgt = direction[0], direction[-1]
        content, comp, mask_ds = self.encode(src, image, mask)
        mem = self.memory[tgt](content, mask_ds).memory_style
        return self.gen[tgt](content, comp, mem, mask_ds)

    def generator_terms(self, ix, mx, iy, my, weights):
        """All six generator-side loss terms for one batch of each domain."""
        images, masks = {"X": ix, "Y": iy}, {"X": mx, "Y": my}
        enc = {d: self.encode(d, images[d], masks[d]) for d in DOMAINS}
        terms = {k: 0.0 for k in ("self", "cycle", "perc", "adv", "content", "style")}
        extras = {}
        for d in DOMAINS:
            t = _other(d)
            c, s, m = enc[d]
            img = images[d]
            # self reconstruction, memory style read from the same domain
            rec = self.gen[d](c, s, self.memory[d](c, m).memory_style, m)
            terms["self"] = terms["self"] + reconstruction_l1(img, rec)
            # d -> t translation
            fake = self.gen[t](c, s, self.memory[t](c, m).memory_style, m)
            c_hat = self.enc_c[t](fake, one_hot(masks[d], self.cfg.num_classes).to(fake.dtype))
            s_tilde = self.enc_s[t](fake)
            s_hat = self.memory[d](c_hat, m).memory_style
            cyc = self.gen[d](c_hat, s_tilde, s_hat, m)
            terms["cycle"] = terms["cycle"] + reconstruction_l1(img, cyc)
            terms["perc"] = terms["perc"] + reconstruction_l1(self.perc(img), self.perc(fake))
            terms["adv"] = terms["adv"] + adversarial_terms(
                None, self.disc[t](fake), "generator", weights.non_saturating)
            if weights.l1_mode:
                terms["content"] = terms["content"] + reconstruction_l1(c, c_hat)
                terms["style"] = terms["style"] + reconstruction_l1(s, s_hat)
            else:
                terms["content"] = terms["content"] + content_contrastive(c, c_hat, weights)
                terms["style"] = terms["style"] + style_contrastive(s, s_hat, weights)
            extras[d] = {"fake": fake, "content": c, "style": s, "mask_ds": m}
        return terms, extras


def _grad_norm(params):
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float(p.grad.detach().double().pow(2).sum())
    return math.sqrt(sq)


class Trainer:
    """Owns the model, both optimizers, the data RNG and the iteration counter."""

    def __init__(self, cfg=None, dtype=torch.float32):
        self.cfg = cfg or RunConfig()
        torch.manual_seed(self.cfg.seed)
        self.model = SHUNIT(self.cfg).to(dtype)
        self.dtype = dtype
        self.weights = self.cfg.loss_weights()
        betas = (self.cfg.beta1, self.cfg.beta2)
        self.opt_gen = torch.optim.Adam(list(self.model.generator_parameters()), lr=self.cfg.lr,
                                        betas=betas, weight_decay=self.cfg.weight_decay)
        self.opt_dis = torch.optim.Adam(self.model.disc.parameters(), lr=self.cfg.lr,
                                        betas=betas, weight_decay=self.cfg.weight_decay)
        self.data_rng = torch.Generator().manual_seed(self.cfg.seed + 1)
        self.iteration = 0

    # -- training --------------------------------------------------------

    def sample_batch(self, samples):
        idx = torch.randint(len(samples), (self.cfg.batch_size,), generator=self.data_rng)
        return stack([samples[i] for i in idx.tolist()])

    def train_step(self, batch_x, batch_y):
        """One discriminator update followed by one joint generator update.

        ``batch_x`` / ``batch_y`` are ``(images [B,3,H,W], masks [B,H,W])``
        tuples (or single ``DomainSample`` objects). Returns a ``LossReport``
        whose ``diagnostics`` hold gradient norms of the memory banks and the
        generator-side parameter groups.
        """
        ix, mx = self._as_batch(batch_x)
        iy, my = self._as_batch(batch_y)
        model, w = self.model, self.weights
        model.train()

        # discriminator step, generators frozen
        with torch.no_grad():
            fake_y = model.translate(ix, mx, "XY")
            fake_x = model.translate(iy, my, "YX")
        model.disc.requires_grad_(True)
        self.opt_dis.zero_grad(set_to_none=True)
        d_terms = {
            "X": adversarial_terms(model.disc["X"](ix), model.disc["X"](fake_x), "discriminator"),
            "Y": adversarial_terms(model.disc["Y"](iy), model.disc["Y"](fake_y), "discriminator"),
        }
        d_total = d_terms["X"] + d_terms["Y"]
        for name, v in d_terms.items():
            if not math.isfinite(float(v.detach())):
                raise NonFiniteLossError(f"disc.{name}", self.iteration)
        d_total.backward()
        self.opt_dis.step()

        # generator step, discriminators frozen
        model.disc.requires_grad_(False)
        self.opt_gen.zero_grad(set_to_none=True)
        terms, extras = model.generator_terms(ix, mx, iy, my, w)
        total, report = total_loss(terms, w, self.iteration)
        if total.requires_grad:
            total.backward()
        report.diagnostics = self._diagnostics()
        if self.cfg.grad_clip > 0:
            nn.utils.clip_grad_norm_(list(model.generator_parameters()), self.cfg.grad_clip)
        self.opt_gen.step()
        model.disc.requires_grad_(True)

        if self.cfg.memory_mode == "update":
            # write each domain's own features into its bank
            for d in DOMAINS:
                e = extras[d]
                model.memory[d].legacy_update(e["content"].detach(), e["style"].detach(),
                                              e["mask_ds"], self.cfg.memory_update_rate)

        report.disc = {f"adv_{d}": float(v.detach()) for d, v in d_terms.items()}
        report.disc_total = float(d_total.detach())
        self.iteration += 1
        return report

    def term_gradient_norms(self, batch_x, batch_y):
        """Norm of ``d(lambda_k * L_k) / d(generator params)`` for every term.

        Runs a forward pass without touching parameters or optimizer state;
        terms whose weight is 0 report exactly 0.
        """
        ix, mx = self._as_batch(batch_x)
        iy, my = self._as_batch(batch_y)
        params = list(self.model.generator_parameters())
        terms, _ = self.model.generator_terms(ix, mx, iy, my, self.weights)
        lam = self.weights.as_dict()
        norms = {}
        for name, value in terms.items():
            if lam[name] == 0.0 or not torch.is_tensor(value) or not value.requires_grad:
                norms[name] = 0.0
                continue
            grads = torch.autograd.grad(lam[name] * value, params, retain_graph=True,
                                        allow_unused=True)
            norms[name] = math.sqrt(sum(float(g.double().pow(2).sum())
                                        for g in grads if g is not None))
        return norms

    def _diagnostics(self):
        m = self.model
        diag = {}
        for d in DOMAINS:
            diag[f"grad.memory.{d}.keys"] = _grad_norm([m.memory[d].keys])
            diag[f"grad.memory.{d}.values"] = _grad_norm([m.memory[d].values])
            diag[f"grad.enc_c.{d}"] = _grad_norm(m.enc_c[d].parameters())
            diag[f"grad.enc_s.{d}"] = _grad_norm(m.enc_s[d].parameters())
            diag[f"grad.gen.{d}"] = _grad_norm(m.gen[d].parameters())
            diag[f"grad.alpha.{d}"] = _grad_norm(s.alpha_raw for s in m.gen[d].shl_layers())
        return diag

    def _as_batch(self, batch):
        if hasattr(batch, "image"):
            batch = (batch.image.unsqueeze(0), batch.mask.unsqueeze(0))
        images, masks = batch
        return images.to(self.dtype), masks.long()

    def fit(self, data_x, data_y, iterations, callback=None):
        """Run ``iterations`` steps on randomly drawn batches; returns the reports."""
        reports = []
        for _ in range(iterations):
            report = self.train_step(self.sample_batch(data_x), self.sample_batch(data_y))
            reports.append(report)
            if callback is not None:
                callback(self, report)
        return reports

    # -- inference -------------------------------------------------------

    @torch.no_grad()
    def translate(self, sample, direction):
        """Translate one ``DomainSample`` (``direction`` "XY" or "YX")."""
        if direction not in ("XY", "YX"):
            raise ValueError(f"direction must be 'XY' or 'YX', got {direction!r}")
        was_training = self.model.training
        self.model.eval()
        try:
            out = self.model.translate(sample.image.unsqueeze(0).to(self.dtype),
                                       sample.mask.unsqueeze(0).long(), direction)
        finally:
            self.model.train(was_training)
        return out[0]

    def alphas(self):
        """``{domain: [per-layer sigmoid(alpha) arrays]}``."""
        return {d: [s.alpha.detach().cpu().numpy() for s in self.model.gen[d].shl_layers()]
                for d in DOMAINS}

    # -- persistence -----------------------------------------------------

    def state_tensors(self):
        tensors = {k: v.detach().contiguous() for k, v in self.model.state_dict().items()}
        for tag, opt in (("gen", self.opt_gen), ("dis", self.opt_dis)):
            for idx, st in opt.state_dict()["state"].items():
                for key, val in st.items():
                    tensors[f"optim.{tag}.{idx}.{key}"] = torch.as_tensor(val).detach().contiguous()
        tensors["rng.torch"] = torch.get_rng_state()
        tensors["rng.data"] = self.data_rng.get_state()
        return tensors

    def save_checkpoint(self, path):
        meta = {
            "version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "dtype": str(self.dtype).replace("torch.", ""),
            "config": self.cfg.to_text(),
            "param_groups": {tag: opt.state_dict()["param_groups"]
                             for tag, opt in (("gen", self.opt_gen), ("dis", self.opt_dis))},
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        save_file(self.state_tensors(), str(tmp),
                  metadata={"shunit": json.dumps(meta, sort_keys=True)})
        tmp.replace(path)
        return path

    @classmethod
    def load_checkpoint(cls, path):
        """Rebuild a trainer from ``path``; nothing is returned on failure."""
        try:
            tensors = load_file(str(path))
            with safe_open(str(path), "pt") as fh:
                raw_meta = (fh.metadata() or {}).get("shunit")
        except (SafetensorError, OSError, ValueError) as exc:
            raise CheckpointError(f"cannot parse checkpoint {path}: {exc}") from None
        if raw_meta is None:
            raise CheckpointError(f"{path}: missing checkpoint metadata")
        try:
            meta = json.loads(raw_meta)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt metadata: {exc}") from None
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")

        trainer = cls(parse_config(meta["config"]), dtype=getattr(torch, meta["dtype"]))
        model_keys = set(trainer.model.state_dict())
        try:
            trainer.model.load_state_dict({k: tensors[k] for k in model_keys}, strict=True)
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing tensor {exc}") from None
        for tag, opt in (("gen", trainer.opt_gen), ("dis", trainer.opt_dis)):
            state = {}
            prefix = f"optim.{tag}."
            for name, val in tensors.items():
                if name.startswith(prefix):
                    idx, key = name[len(prefix):].split(".", 1)
                    state.setdefault(int(idx), {})[key] = val.clone()
            opt.load_state_dict({"state": state, "param_groups": meta["param_groups"][tag]})
        torch.set_rng_state(tensors["rng.torch"])
        trainer.data_rng.set_state(tensors["rng.data"])
        trainer.iteration = int(meta["iteration"])
        return trainer
