"""Training on the two-domain toy problem.

Domain X paints a bright square (+0.6) on a neutral background, domain Y
a dark one (-0.6). Translation X -> Y should darken the square and leave
the background alone. Run with an iteration count, e.g.

    python3 demos/04_toy_translation.py 300
"""

# %%
import sys
from pathlib import Path

import torch

from shunit import RunConfig, Trainer, generate_synthetic
from shunit.data import save_pair
from shunit.metrics import cfid
from shunit.networks import PerceptualExtractor

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 100
cfg = RunConfig(width_factor=0.125, batch_size=4)
spec = cfg.synthetic_spec()
xs, ys = generate_synthetic(spec, 64, "X"), generate_synthetic(spec, 64, "Y")


def square_mean(samples, images):
    return float(torch.stack([im[:, s.mask == 1].mean() for s, im in zip(samples, images)]).mean())


# %% Train, printing the loss terms now and then
trainer = Trainer(cfg)


def log(tr, report):
    if tr.iteration % 25 == 0:
        terms = " ".join(f"{k}={v:.3f}" for k, v in report.terms.items())
        print(f"it {tr.iteration:4d}  {terms}  D={report.disc_total:.3f}")


trainer.fit(xs, ys, iterations, callback=log)

# %% How far did the square move toward Y, and what does cFID say?
out = [trainer.translate(s, "XY") for s in xs]
mx, my = square_mean(xs, [s.image for s in xs]), square_mean(ys, [s.image for s in ys])
mt = square_mean(xs, out)
print(f"square mean: X {mx:.3f}  translated {mt:.3f}  Y {my:.3f}  "
      f"(closed {(mx - mt) / (mx - my):.0%} of the gap)")
ext = PerceptualExtractor()
ref = [(s.image, s.mask) for s in ys]
print("cFID X vs Y:         ", cfid([(s.image, s.mask) for s in xs], ref, ext).mean)
print("cFID translated vs Y:", cfid([(o, s.mask) for o, s in zip(out, xs)], ref, ext).mean)

# %% Dump a few translations as PNG next to their sources
dump = Path("demo_output")
for s, o in list(zip(xs, out))[:4]:
    save_pair(dump / "source", s.name, s.image, s.mask)
    save_pair(dump / "translated", s.name, o, s.mask)
print("alphas, generator Y, first layer:", trainer.alphas()["Y"][0])
