"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored; unknown keys are rejected.
Defaults follow the published training setup (Adam 1e-4, betas 0.5/0.999,
weight decay 1e-4, loss weights 10/10/1/1/10/10, tau 0.7, 20 slots/class)
except ``fidelity``, which defaults to the CPU-scale ``toy`` widths.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .data import SyntheticSpec
from .losses import LossWeights


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    # data
    data_root: str = ""
    output_dir: str = "run"
    num_classes: int = 2
    # model
    fidelity: str = "toy"
    width_factor: float = 0.25
    slots_per_class: str = "20"
    memory_mode: str = "backprop"
    memory_update_rate: float = 0.1
    memory_init_std: float = 0.02
    use_label_input: bool = True
    padding: str = "reflect"
    disc_scales: int = 2
    perceptual: str = "frozen-random-convnet"
    perceptual_weights: str = ""
    perceptual_seed: int = 1234
    # optimization
    seed: int = 0
    iterations: int = 1000
    batch_size: int = 1
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-4
    grad_clip: float = 0.0
    # losses
    lambda_self: float = 10.0
    lambda_cycle: float = 10.0
    lambda_perc: float = 1.0
    lambda_adv: float = 1.0
    lambda_content: float = 10.0
    lambda_style: float = 10.0
    tau: float = 0.7
    contrastive_normalize: bool = True
    contrastive_reduction: str = "mean"
    max_negatives: int = 4096
    l1_mode: bool = False
    non_saturating: bool = True
    # outputs
    log_every: int = 1
    preview_every: int = 0
    checkpoint_every: int = 0
    # metric
    cfid_min_pixels: int = 16
    cfid_eps: float = 1e-6
    # synthetic data; per-class channel triples separated by "|"
    synth_canvas_size: int = 32
    synth_count: int = 64
    synth_seed: int = 0
    synth_min_rect: int = 8
    synth_max_rect: int = 16
    synth_x_means: str = "0,0,0|0.6,0.6,0.6"
    synth_y_means: str = "0,0,0|-0.6,-0.6,-0.6"
    synth_x_stds: str = "0.1,0.1,0.1|0.1,0.1,0.1"
    synth_y_stds: str = "0.1,0.1,0.1|0.1,0.1,0.1"

    def __post_init__(self):
        self.validate()

    @property
    def width(self):
        return 1.0 if self.fidelity == "paper" else self.width_factor

    @property
    def slots(self):
        parts = [int(p) for p in str(self.slots_per_class).split(",")]
        if len(parts) == 1:
            return parts[0]
        return parts

    def validate(self):
        choices = {
            "fidelity": ("paper", "toy"),
            "memory_mode": ("backprop", "update"),
            "padding": ("reflect", "zero"),
            "contrastive_reduction": ("mean", "sum"),
            "perceptual": ("frozen-random-convnet", "pretrained-vgg16-relu5_3"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {allowed}")
        positive = ("lr", "tau", "iterations", "batch_size", "disc_scales", "width_factor",
                    "synth_canvas_size")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes", "need at least 2 classes")
        for key in ("lambda_self", "lambda_cycle", "lambda_perc", "lambda_adv",
                    "lambda_content", "lambda_style", "weight_decay", "grad_clip"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be nonnegative")
        if not 0.0 <= self.memory_update_rate <= 1.0:
            raise ConfigError("memory_update_rate", "must lie in [0, 1]")
        try:
            slots = self.slots
        except ValueError:
            raise ConfigError("slots_per_class", "expected an int or comma-separated ints")
        if isinstance(slots, list) and len(slots) != self.num_classes:
            raise ConfigError("slots_per_class", "need one count per class")
        if self.perceptual == "pretrained-vgg16-relu5_3" and not self.perceptual_weights:
            raise ConfigError("perceptual_weights", "required for the VGG-16 extractor")

    def loss_weights(self):
        return LossWeights(
            self=self.lambda_self, cycle=self.lambda_cycle, perc=self.lambda_perc,
            adv=self.lambda_adv, content=self.lambda_content, style=self.lambda_style,
            tau=self.tau, normalize=self.contrastive_normalize,
            reduction=self.contrastive_reduction, max_negatives=self.max_negatives,
            l1_mode=self.l1_mode, non_saturating=self.non_saturating,
        )

    def synthetic_spec(self):
        def table(text, key):
            try:
                rows = [tuple(float(v) for v in part.split(",")) for part in text.split("|")]
            except ValueError:
                raise ConfigError(key, "expected '|'-separated comma triples")
            return rows

        spec = SyntheticSpec(
            canvas_size=self.synth_canvas_size,
            num_classes=self.num_classes,
            means={"X": table(self.synth_x_means, "synth_x_means"),
                   "Y": table(self.synth_y_means, "synth_y_means")},
            stds={"X": table(self.synth_x_stds, "synth_x_stds"),
                  "Y": table(self.synth_y_stds, "synth_y_stds")},
            min_rect=self.synth_min_rect,
            max_rect=self.synth_max_rect,
            seed=self.synth_seed,
        )
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError("synth_*", str(exc))
        return spec

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return RunConfig(**values)

    def to_text(self):
        """Canonical text form; ``parse_config(cfg.to_text()) == cfg``."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key, kind, raw):
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(key, "unknown key")
        values[key] = _convert(key, kinds[key], raw)
    return RunConfig(**values)


def load_config(path):
    return parse_config(Path(path).read_text())
