"""The command-line pipeline end to end, driven from Python.

Equivalent shell session (inside an empty directory):

    shunit gen-synthetic toy.cfg
    shunit train toy.cfg
    shunit translate run/checkpoint.safetensors data/X XY out
    shunit eval-cfid out data/Y
    shunit inspect run/checkpoint.safetensors
"""

# %%
import tempfile
from pathlib import Path

from shunit.cli import main

work = Path(tempfile.mkdtemp(prefix="shunit_"))
(work / "toy.cfg").write_text("""\
# tiny run: 16px canvas, narrow networks
data_root = data
output_dir = run
width_factor = 0.0625
disc_scales = 1
synth_canvas_size = 16
synth_min_rect = 4
synth_max_rect = 8
synth_count = 8
batch_size = 2
iterations = 20
preview_every = 10
""")
wd = ["--workdir", str(work)]

# %%
assert main(wd + ["gen-synthetic", "toy.cfg"]) == 0
assert main(wd + ["train", "toy.cfg"]) == 0
print((work / "run" / "losses.csv").read_text().splitlines()[:4])

# %%
assert main(wd + ["translate", "run/checkpoint.safetensors", "data/X", "XY", "out"]) == 0
assert main(wd + ["eval-cfid", "out", "data/Y", "--report", "cfid.csv"]) == 0
print((work / "cfid.csv").read_text())

# %%
main(wd + ["inspect", "run/checkpoint.safetensors"])
print("workdir:", work)
