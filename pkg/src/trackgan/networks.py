"""Generator and per-pixel critic built from a declarative layer spec.

The generator takes an RGB frame plus the proposer's first guess and runs

    features  shared convolution stack with mixed kernel sizes
    local     full-resolution 3x3 stack            -> 1-channel logit
    global    downsample, wide-kernel, upsample    -> 1-channel logit
    weight    1-channel projection, squashed       -> per-pixel weight w

and returns ``sigmoid(w * local + (1 - w) * global)``. The critic maps a mask
to a same-sized map of per-pixel realness probabilities.

Specs serialize to a small text format, one layer per line::

    [features]
    conv cin=4 cout=12 k=3 s=1 p=1 norm=1 act=relu bias=0 res=-
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

LAYER_KINDS = ("conv", "convT", "maxpool", "avgpool", "upsample")
ACTIVATIONS = ("none", "relu", "lrelu", "sigmoid", "tanh")
GENERATOR_STAGES = ("features", "local", "global", "weight")
STAGES = GENERATOR_STAGES + ("critic",)
SPEC_VERSION = 1


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    cin: int = 0
    cout: int = 0
    k: int = 1
    s: int = 1
    p: int = 0
    norm: bool = False
    act: str = "none"
    bias: bool = False
    # index of an earlier layer in the stage whose output is added before the
    # activation; -1 means the stage input
    res: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.act not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.act!r}")
        if self.k < 1 or self.s < 1 or self.p < 0:
            raise SpecError(f"bad kernel/stride/padding in {self}")
        if self.learned and (self.cin < 1 or self.cout < 1):
            raise SpecError(f"{self.kind} needs positive channel counts")

    @property
    def learned(self) -> bool:
        return self.kind in ("conv", "convT")

    def out_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        c, h, w = shape
        if self.learned and c != self.cin:
            raise SpecError(f"{self.kind} expects {self.cin} input channels, got {c}")
        if self.kind == "conv":
            oh, ow = ((d + 2 * self.p - self.k) // self.s + 1 for d in (h, w))
            c = self.cout
        elif self.kind == "convT":
            oh, ow = ((d - 1) * self.s - 2 * self.p + self.k for d in (h, w))
            c = self.cout
        elif self.kind in ("maxpool", "avgpool"):
            oh, ow = ((d + 2 * self.p - self.k) // self.s + 1 for d in (h, w))
        else:
            oh, ow = h * self.s, w * self.s
        if oh < 1 or ow < 1:
            raise SpecError(f"{self.kind} layer collapses a {h}x{w} input")
        return c, oh, ow

    def dumps(self) -> str:
        res = "-" if self.res is None else str(self.res)
        return (
            f"{self.kind} cin={self.cin} cout={self.cout} k={self.k} s={self.s} p={self.p} "
            f"norm={int(self.norm)} act={self.act} bias={int(self.bias)} res={res}"
        )

    @classmethod
    def parse(cls, line: str) -> "LayerSpec":
        kind, *pairs = line.split()
        kw: dict = {}
        for pair in pairs:
            key, _, val = pair.partition("=")
            if key in ("cin", "cout", "k", "s", "p"):
                kw[key] = int(val)
            elif key in ("norm", "bias"):
                kw[key] = val in ("1", "true", "True")
            elif key == "act":
                kw[key] = val
            elif key == "res":
                kw[key] = None if val in ("-", "", "none") else int(val)
            else:
                raise SpecError(f"unknown layer field {key!r} in {line!r}")
        return cls(kind=kind, **kw)


def conv(cin, cout, k, s=1, norm=True, act="relu", res=None) -> LayerSpec:
    return LayerSpec("conv", cin, cout, k, s, k // 2, norm, act, not norm, res)


@dataclass(frozen=True)
class NetworkSpec:
    features: tuple[LayerSpec, ...] = ()
    local: tuple[LayerSpec, ...] = ()
    global_: tuple[LayerSpec, ...] = ()
    weight: tuple[LayerSpec, ...] = ()
    critic: tuple[LayerSpec, ...] = ()
    in_channels: int = 4
    conditional_critic: bool = False
    init_std: float = 0.02
    param_target: int = 1_590_000

    def stage(self, name: str) -> tuple[LayerSpec, ...]:
        return getattr(self, "global_" if name == "global" else name)

    @property
    def critic_in_channels(self) -> int:
        return 1 + (3 if self.conditional_critic else 0)

    def is_empty(self, part: str = "generator") -> bool:
        names = GENERATOR_STAGES if part == "generator" else ("critic",) if part == "critic" else STAGES
        return not any(self.stage(n) for n in names)

    def dumps(self) -> str:
        lines = [
            f"# trackgan network spec v{SPEC_VERSION}",
            f"in_channels = {self.in_channels}",
            f"conditional_critic = {int(self.conditional_critic)}",
            f"init_std = {self.init_std!r}",
            f"param_target = {self.param_target}",
        ]
        for name in STAGES:
            lines.append(f"[{name}]")
            lines.extend(layer.dumps() for layer in self.stage(name))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NetworkSpec":
        header: dict = {}
        stages: dict[str, list[LayerSpec]] = {n: [] for n in STAGES}
        current = None
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                current = line.strip("[]").strip()
                if current not in stages:
                    raise SpecError(f"unknown stage [{current}]")
            elif current is None:
                key, _, val = (t.strip() for t in line.partition("="))
                if key == "init_std":
                    header[key] = float(val)
                elif key == "conditional_critic":
                    header[key] = val in ("1", "true", "True")
                elif key in ("in_channels", "param_target"):
                    header[key] = int(val)
                else:
                    raise SpecError(f"unknown spec header {key!r}")
            else:
                stages[current].append(LayerSpec.parse(line))
        spec = cls(
            features=tuple(stages["features"]),
            local=tuple(stages["local"]),
            global_=tuple(stages["global"]),
            weight=tuple(stages["weight"]),
            critic=tuple(stages["critic"]),
            **header,
        )
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        return cls.loads(Path(path).read_text())


def stage_shapes(layers, shape: tuple[int, int, int]) -> list[tuple[int, int, int]]:
    """Output shape of every layer; checks channel chaining and residual links."""
    shapes = []
    for i, layer in enumerate(layers):
        out = layer.out_shape(shapes[-1] if shapes else shape)
        if layer.res is not None:
            if not -1 <= layer.res < i:
                raise SpecError(f"layer {i}: residual source {layer.res} is not an earlier layer")
            src = shape if layer.res == -1 else shapes[layer.res]
            if src != out:
                raise SpecError(f"layer {i}: residual joins {src} to {out}")
        shapes.append(out)
    return shapes


def validate(spec: NetworkSpec, height: int = 128, width: int = 128) -> None:
    """Check that every stage composes for a ``height x width`` input."""
    in_shape = (spec.in_channels, height, width)
    feats = stage_shapes(spec.features, in_shape)
    feat_shape = feats[-1] if feats else in_shape
    for name in ("local", "global", "weight"):
        shapes = stage_shapes(spec.stage(name), feat_shape)
        if not shapes or shapes[-1] != (1, height, width):
            raise SpecError(f"stage [{name}] must end in a 1x{height}x{width} map")
    shapes = stage_shapes(spec.critic, (spec.critic_in_channels, height, width))
    if not shapes or shapes[-1] != (1, height, width):
        raise SpecError(f"[critic] must end in a 1x{height}x{width} map")


def downsampling_factor(spec: NetworkSpec) -> int:
    """Smallest side length multiple that every stage can round-trip."""
    factor = 1
    for name in STAGES:
        f = 1
        for layer in spec.stage(name):
            if layer.kind in ("conv", "maxpool", "avgpool") and layer.s > 1:
                f *= layer.s
        factor = max(factor, f)
    return factor


# -- complexity accounting -------------------------------------------------

def layer_params(layer: LayerSpec) -> int:
    if not layer.learned:
        return 0
    n = layer.k * layer.k * layer.cin * layer.cout
    if layer.bias:
        n += layer.cout
    if layer.norm:
        n += 2 * layer.cout
    return n


def count_params(spec: NetworkSpec, part: str = "generator") -> int:
    """Trainable scalars in ``part``: ``generator``, ``critic`` or ``all``."""
    names = {"generator": GENERATOR_STAGES, "critic": ("critic",), "all": STAGES}[part]
    return sum(layer_params(layer) for name in names for layer in spec.stage(name))


def layer_flops(layer: LayerSpec, in_shape: tuple[int, int, int]) -> int:
    """2 x MACs for convolutions, plus one op per output element for each
    elementwise step (normalization, residual add, activation, pooling, resampling)."""
    c, h, w = in_shape
    oc, oh, ow = layer.out_shape(in_shape)
    elements = oc * oh * ow
    if layer.kind == "conv":
        flops = 2 * layer.k * layer.k * layer.cin * layer.cout * oh * ow
    elif layer.kind == "convT":
        flops = 2 * layer.k * layer.k * layer.cin * layer.cout * h * w
    else:
        flops = elements
    flops += elements * (int(layer.norm) + int(layer.res is not None) + int(layer.act != "none"))
    return flops


def _stage_flops(layers, shape) -> tuple[int, tuple[int, int, int]]:
    total = 0
    for layer in layers:
        total += layer_flops(layer, shape)
        shape = layer.out_shape(shape)
    return total, shape


def count_flops(spec: NetworkSpec, input_dims: tuple[int, int], part: str = "generator") -> int:
    h, w = input_dims
    total = 0
    if part in ("generator", "all") and not spec.is_empty("generator"):
        flops, feat = _stage_flops(spec.features, (spec.in_channels, h, w))
        total += flops
        for name in ("local", "global", "weight"):
            total += _stage_flops(spec.stage(name), feat)[0]
        # weight squashing, convex blend, output squashing
        total += 3 * h * w
    if part in ("critic", "all") and spec.critic:
        total += _stage_flops(spec.critic, (spec.critic_in_channels, h, w))[0] + h * w
    return total


# -- torch modules ---------------------------------------------------------

def _activation(name: str) -> nn.Module:
    return {
        "none": nn.Identity(),
        "relu": nn.ReLU(),
        "lrelu": nn.LeakyReLU(0.2),
        "sigmoid": nn.Sigmoid(),
        "tanh": nn.Tanh(),
    }[name]


def _operator(layer: LayerSpec) -> nn.Module:
    if layer.kind == "conv":
        return nn.Conv2d(layer.cin, layer.cout, layer.k, layer.s, layer.p, bias=layer.bias)
    if layer.kind == "convT":
        return nn.ConvTranspose2d(layer.cin, layer.cout, layer.k, layer.s, layer.p, bias=layer.bias)
    if layer.kind == "maxpool":
        return nn.MaxPool2d(layer.k, layer.s, layer.p)
    if layer.kind == "avgpool":
        return nn.AvgPool2d(layer.k, layer.s, layer.p)
    return nn.Upsample(scale_factor=layer.s, mode="bilinear", align_corners=False)


class Stage(nn.Module):
    def __init__(self, layers: tuple[LayerSpec, ...]):
        super().__init__()
        self.specs = layers
        self.ops = nn.ModuleList(_operator(l) for l in layers)
        self.norms = nn.ModuleList(
            nn.BatchNorm2d(l.cout) if l.norm and l.learned else nn.Identity() for l in layers
        )
        self.acts = nn.ModuleList(_activation(l.act) for l in layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        outs = []
        h = x
        for spec, op, norm, act in zip(self.specs, self.ops, self.norms, self.acts):
            y = norm(op(h))
            if spec.res is not None:
                y = y + (x if spec.res == -1 else outs[spec.res])
            h = act(y)
            outs.append(h)
        return h


def init_weights(module: nn.Module, std: float) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class Generator(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        validate(spec, *(2 * (downsampling_factor(spec) * 4,)))
        self.spec = spec
        self.features = Stage(spec.features)
        self.local = Stage(spec.local)
        self.global_ = Stage(spec.global_)
        self.weight = Stage(spec.weight)
        init_weights(self, spec.init_std)

    def check_input(self, img: torch.Tensor, guess: torch.Tensor) -> None:
        if img.shape[-2:] != guess.shape[-2:]:
            raise SpecError(f"image {tuple(img.shape)} and guess {tuple(guess.shape)} differ in size")
        factor = downsampling_factor(self.spec)
        h, w = img.shape[-2:]
        if h % factor or w % factor:
            raise SpecError(f"input {h}x{w} is not divisible by the downsampling factor {factor}")

    def forward_parts(
        self, img: torch.Tensor, guess: torch.Tensor, weight_override: torch.Tensor | float | None = None
    ) -> dict[str, torch.Tensor]:
        """All intermediate maps; ``img`` is (N,3,H,W) and ``guess`` (N,1,H,W), both in [0,1]."""
        self.check_input(img, guess)
        x = torch.cat([img, guess], dim=1) * 2.0 - 1.0
        f = self.features(x)
        local, global_ = self.local(f), self.global_(f)
        if weight_override is None:
            w = torch.sigmoid(self.weight(f))
        else:
            w = torch.as_tensor(weight_override, dtype=local.dtype).expand_as(local)
        fused = w * local + (1.0 - w) * global_
        return {"local": local, "global": global_, "weight": w, "fused": fused, "prob": torch.sigmoid(fused)}

    def forward(self, img: torch.Tensor, guess: torch.Tensor) -> torch.Tensor:
        return self.forward_parts(img, guess)["prob"]


class Critic(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        self.net = Stage(spec.critic)
        init_weights(self, spec.init_std)

    def forward(self, mask: torch.Tensor, img: torch.Tensor | None = None) -> torch.Tensor:
        x = mask * 2.0 - 1.0
        if self.spec.conditional_critic:
            if img is None:
                raise SpecError("conditional critic needs the input image")
            x = torch.cat([x, img * 2.0 - 1.0], dim=1)
        return torch.sigmoid(self.net(x))


def image_score(scores: torch.Tensor) -> torch.Tensor:
    """Whole-image realness: the mean of the per-pixel scores."""
    return scores.mean(dim=(-3, -2, -1))


def default_spec() -> NetworkSpec:
    features = (
        conv(4, 12, 3),
        conv(12, 12, 5),
        conv(12, 12, 7, res=0),
    )
    local = (
        conv(12, 16, 3),
        conv(16, 16, 3, res=0),
        conv(16, 1, 1, norm=False, act="none"),
    )
    up = LayerSpec("upsample", s=2)
    global_ = (
        conv(12, 32, 3, s=2),            # 64
        conv(32, 64, 3, s=2),            # 32
        conv(64, 128, 3, s=2),           # 16
        conv(128, 128, 3, s=2),          # 8
        conv(128, 128, 7, res=3),
        conv(128, 128, 5, res=4),
        up,
        conv(128, 64, 3),
        up,
        conv(64, 32, 3),
        up,
        conv(32, 16, 3),
        up,
        conv(16, 1, 3, norm=False, act="none"),
    )
    weight = (
        conv(12, 8, 3),
        conv(8, 1, 1, norm=False, act="none"),
    )
    critic = (
        conv(1, 16, 3, norm=False, act="lrelu"),
        LayerSpec("maxpool", k=2, s=2),
        conv(16, 32, 3, act="lrelu"),
        LayerSpec("maxpool", k=2, s=2),
        conv(32, 64, 3, act="lrelu"),
        LayerSpec("maxpool", k=2, s=2),
        LayerSpec("convT", 64, 32, 4, 2, 1, True, "lrelu"),
        LayerSpec("convT", 32, 16, 4, 2, 1, True, "lrelu"),
        LayerSpec("convT", 16, 8, 4, 2, 1, True, "lrelu"),
        conv(8, 1, 3, norm=False, act="none"),
    )
    return NetworkSpec(features, local, global_, weight, critic)
