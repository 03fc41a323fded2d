"""Reading a class-aware style memory.

Each class owns U (key, value) slots. A pixel of class n compares its
content vector against the class-n keys by cosine similarity, softmaxes
the scores and returns the weighted sum of the class-n values.
"""

# %%
import torch

from shunit.style_memory import StyleMemory, read

torch.manual_seed(0)

# %% A hand-sized bank: 2 classes, 2 slots, 2-d keys, 1-d values
keys = torch.tensor([[[1.0, 0.0], [0.0, 1.0]],
                     [[1.0, 1.0], [-1.0, 1.0]]])
values = torch.tensor([[[2.0], [-2.0]],
                       [[10.0], [0.0]]])
content = torch.tensor([[[1.0, 0.0], [1.0, 1.0]],
                        [[0.0, 1.0], [1.0, -1.0]]])[None]   # [1, 2, 2, 2]
mask = torch.tensor([[[0, 1], [1, 0]]])

res = read(content, mask, keys, values)
print("memory style\n", res.memory_style[0, 0])
print("slot weights per pixel (sum to 1)\n", res.weights[0].sum(0))

# %% Perturbing class 1 leaves class-0 pixels bit-identical
keys2, values2 = keys.clone(), values.clone()
keys2[1] += 5.0
values2[1] *= -3.0
res2 = read(content, mask, keys2, values2)
print("class-0 pixels unchanged:",
      torch.equal(res.memory_style[..., mask[0] == 0], res2.memory_style[..., mask[0] == 0]))

# %% A learnable bank: gradients reach the slots of every class present
mem = StyleMemory(num_classes=2, key_dim=4, value_dim=3, slots=5)
c = torch.randn(1, 4, 6, 6)
m = torch.zeros(1, 6, 6, dtype=torch.long)
m[:, :, 3:] = 1
mem(c, m).memory_style.pow(2).sum().backward()
print("key grad norm per class:", mem.keys.grad.flatten(1).norm(dim=1))

# %% The legacy alternative: a frozen bank written by a moving average
legacy = StyleMemory(2, 4, 3, slots=5, mode="update")
before = legacy.values.clone()
legacy.legacy_update(c, torch.randn(1, 3, 6, 6), m, rate=0.1)
print("bank moved by", float((legacy.values - before).abs().max()),
      "| requires_grad:", legacy.values.requires_grad)
