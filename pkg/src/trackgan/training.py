"""Adversarial training of the track generator against the per-pixel critic.

Each batch runs one critic update with the generator frozen, then one generator
update with the critic frozen. The generator minimizes

    adversarial(fake) + lambda * mean((fake - target) ** 2)

and the critic minimizes the binary cross-entropy of telling real masks from
generated ones, pixel by pixel.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import torch

from .networks import Critic, Generator, NetworkSpec
from .proposer import ProposerConfig, initial_guess

EPS = 1e-7
CHECKPOINT_FORMAT = "trackgan-checkpoint"
CHECKPOINT_VERSION = 1
HISTORY_FIELDS = ("epoch", "l_adv_g", "l_adv_d", "l_domain", "l_total", "d_accuracy")


class NonFiniteLossError(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


class CheckpointError(RuntimeError):
    pass


# -- losses ----------------------------------------------------------------

def domain_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if generated.shape != target.shape:
        raise ValueError(f"generated {tuple(generated.shape)} and target {tuple(target.shape)} differ")
    return ((generated - target) ** 2).mean()


def adv_loss_discriminator(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    real = real_scores.clamp(EPS, 1.0 - EPS)
    fake = fake_scores.clamp(EPS, 1.0 - EPS)
    return 0.5 * ((-torch.log(real)).mean() + (-torch.log(1.0 - fake)).mean())


def adv_loss_generator(fake_scores: torch.Tensor) -> torch.Tensor:
    """Non-saturating form: the generator maximizes log D(fake)."""
    return (-torch.log(fake_scores.clamp(EPS, 1.0 - EPS))).mean()


def total_generator_loss(adv, dom, lam: float):
    return adv + lam * dom


def pixel_accuracy(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> float:
    """Share of critic pixels on the correct side of 0.5 (a score of exactly 0.5 reads as real)."""
    correct = (real_scores >= 0.5).sum() + (fake_scores < 0.5).sum()
    return float(correct) / (real_scores.numel() + fake_scores.numel())


# -- configuration and state -----------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lam: float = 100.0
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    equilibrium_band: float = 0.15
    split_ratio: float = 0.8
    deterministic: bool = True
    # "hard": the critic sees the thresholded mask, gradients pass straight through
    critic_view: str = "hard"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 < self.equilibrium_band < 0.5:
            raise ValueError("equilibrium_band must lie in (0, 0.5)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.critic_view not in ("hard", "soft"):
            raise ValueError("critic_view must be 'hard' or 'soft'")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


@dataclass
class EpochRecord:
    epoch: int
    l_adv_g: float
    l_adv_d: float
    l_domain: float
    l_total: float
    d_accuracy: float


@dataclass
class TrainState:
    generator: Generator
    critic: Critic
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    epoch: int = 0
    history: list[EpochRecord] = field(default_factory=list)


def set_determinism(seed: int, enabled: bool = True) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(enabled)


def new_state(spec: NetworkSpec, cfg: TrainConfig) -> TrainState:
    set_determinism(cfg.seed, cfg.deterministic)
    gen, critic = Generator(spec), Critic(spec)
    betas = (cfg.beta1, cfg.beta2)
    return TrainState(
        generator=gen,
        critic=critic,
        opt_g=torch.optim.Adam(gen.parameters(), lr=cfg.lr_g, betas=betas),
        opt_d=torch.optim.Adam(critic.parameters(), lr=cfg.lr_d, betas=betas),
    )


# -- data ------------------------------------------------------------------

@dataclass
class TensorData:
    """Stacked (N, C, H, W) float32 tensors for images, first guesses and masks."""

    images: torch.Tensor
    guesses: torch.Tensor
    masks: torch.Tensor

    def __len__(self) -> int:
        return self.images.shape[0]


def image_tensor(img: np.ndarray) -> torch.Tensor:
    arr = img.astype(np.float32) / 255.0 if img.dtype == np.uint8 else img.astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def prepare(samples, proposer: ProposerConfig = ProposerConfig()) -> TensorData:
    images = torch.stack([image_tensor(s.image) for s in samples])
    guesses = torch.stack(
        [torch.from_numpy(initial_guess(s.image, proposer).astype(np.float32))[None] for s in samples]
    )
    masks = torch.stack([torch.from_numpy(s.mask.astype(np.float32))[None] for s in samples])
    return TensorData(images, guesses, masks)


def batches(data: TensorData, batch_size: int, seed: int, epoch: int) -> Iterator[tuple[torch.Tensor, ...]]:
    """Seeded shuffle per epoch. A short trailing remainder joins the last full
    batch, so normalization never sees a batch of one or two samples."""
    order = np.random.default_rng([seed, epoch]).permutation(len(data))
    n_full = max(1, len(data) // batch_size)
    for b in range(n_full):
        stop = (b + 1) * batch_size if b < n_full - 1 else len(data)
        idx = torch.from_numpy(order[b * batch_size : stop])
        yield data.images[idx], data.guesses[idx], data.masks[idx]


# -- protocol --------------------------------------------------------------

def _set_trainable(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def critic_input(fake: torch.Tensor, view: str = "hard") -> torch.Tensor:
    """What the critic is shown for a generated mask.

    In hard view the forward value is the binarized mask (>= 0.5) while the
    backward pass treats the threshold as identity.
    """
    if view == "soft":
        return fake
    hard = (fake >= 0.5).to(fake.dtype)
    return fake + (hard - fake).detach()


def _joint_scores(critic: Critic, real, fake, cond):
    """Score real and generated masks in one batch so normalization statistics
    are shared and batch composition gives the critic no shortcut."""
    n = real.shape[0]
    both = critic(torch.cat([real, fake]), None if cond is None else torch.cat([cond, cond]))
    return both[:n], both[n:]


def train_step(state: TrainState, img, guess, mask, cfg: TrainConfig) -> dict[str, float]:
    gen, critic = state.generator, state.critic
    gen.train()
    critic.train()
    fake = gen(img, guess)
    shown = critic_input(fake, cfg.critic_view)
    cond = img if critic.spec.conditional_critic else None

    # critic update, generator frozen
    _set_trainable(critic, True)
    state.opt_d.zero_grad(set_to_none=True)
    real_scores, fake_scores = _joint_scores(critic, mask, shown.detach(), cond)
    loss_d = adv_loss_discriminator(real_scores, fake_scores)
    loss_d.backward()
    state.opt_d.step()
    accuracy = pixel_accuracy(real_scores.detach(), fake_scores.detach())

    # generator update, critic frozen
    _set_trainable(critic, False)
    state.opt_g.zero_grad(set_to_none=True)
    adv = adv_loss_generator(_joint_scores(critic, mask, shown, cond)[1])
    dom = domain_loss(fake, mask)
    total = total_generator_loss(adv, dom, cfg.lam)
    total.backward()
    state.opt_g.step()
    _set_trainable(critic, True)

    return {
        "l_adv_g": adv.item(),
        "l_adv_d": loss_d.item(),
        "l_domain": dom.item(),
        "l_total": total.item(),
        "d_accuracy": accuracy,
    }


def train_epoch(state: TrainState, stream: Iterable, cfg: TrainConfig) -> TrainState:
    sums: dict[str, float] = {k: 0.0 for k in HISTORY_FIELDS[1:]}
    weight = 0
    for i, (img, guess, mask) in enumerate(stream):
        stats = train_step(state, img, guess, mask, cfg)
        bad = [k for k, v in stats.items() if not math.isfinite(v)]
        if bad:
            snapshot = {"epoch": state.epoch + 1, "batch": i, **stats}
            raise NonFiniteLossError(f"non-finite {', '.join(bad)} at epoch {state.epoch + 1}, batch {i}", snapshot)
        n = img.shape[0]
        for k, v in stats.items():
            sums[k] += v * n
        weight += n
    if weight == 0:
        raise ValueError("train_epoch received no batches")
    state.epoch += 1
    state.history.append(EpochRecord(state.epoch, **{k: v / weight for k, v in sums.items()}))
    return state


def fit(state: TrainState, data: TensorData, cfg: TrainConfig, on_epoch=None) -> TrainState:
    for _ in range(cfg.epochs):
        train_epoch(state, batches(data, cfg.batch_size, cfg.seed, state.epoch), cfg)
        if on_epoch is not None:
            on_epoch(state)
    return state


@torch.no_grad()
def predict(generator: Generator, images: torch.Tensor, guesses: torch.Tensor, batch_size: int = 16) -> np.ndarray:
    """Probability masks (N, H, W) in inference mode."""
    generator.eval()
    out = [generator(images[i : i + batch_size], guesses[i : i + batch_size]) for i in range(0, len(images), batch_size)]
    return torch.cat(out)[:, 0].numpy().astype(np.float64)


# -- reporting -------------------------------------------------------------

@dataclass
class EquilibriumReport:
    accuracies: list[float]
    band: float
    window_start: int
    passed: bool

    @property
    def window(self) -> list[float]:
        return self.accuracies[self.window_start :]

    def text(self) -> str:
        lo, hi = 0.5 - self.band, 0.5 + self.band
        lines = ["epoch  d_accuracy"]
        for i, a in enumerate(self.accuracies, start=1):
            mark = " *" if i - 1 >= self.window_start else ""
            lines.append(f"{i:5d}  {a:.4f}{mark}")
        lines.append(f"final-quarter window (*): epochs {self.window_start + 1}-{len(self.accuracies)}")
        lines.append(f"window mean accuracy: {float(np.mean(self.window)):.4f}")
        lines.append(f"band: [{lo:.2f}, {hi:.2f}]  -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def equilibrium_report(history: list[EpochRecord] | list[float], band: float = 0.15) -> EquilibriumReport:
    """Pass when every epoch in the final quarter of training keeps the critic's
    pixel accuracy within ``0.5 +/- band``."""
    accs = [h.d_accuracy if isinstance(h, EpochRecord) else float(h) for h in history]
    if not accs:
        raise ValueError("equilibrium_report needs at least one completed epoch")
    n_window = math.ceil(len(accs) / 4)
    start = len(accs) - n_window
    passed = all(0.5 - band <= a <= 0.5 + band for a in accs[start:])
    return EquilibriumReport(accs, band, start, passed)


def write_history(path: str | Path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for rec in history:
            writer.writerow([rec.epoch] + [repr(getattr(rec, k)) for k in HISTORY_FIELDS[1:]])


def read_history(path: str | Path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        return [
            EpochRecord(int(row["epoch"]), *(float(row[k]) for k in HISTORY_FIELDS[1:]))
            for row in csv.DictReader(fh)
        ]


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path: str | Path, state: TrainState, config_hash: str, extra: dict | None = None) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config_hash": config_hash,
            "epoch": state.epoch,
            "spec": state.generator.spec.dumps(),
            "generator": state.generator.state_dict(),
            "critic": state.critic.state_dict(),
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[Generator, dict]:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a trackgan checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {blob.get('version')} != {CHECKPOINT_VERSION}")
    gen = Generator(NetworkSpec.loads(blob["spec"]))
    gen.load_state_dict(blob["generator"])
    gen.eval()
    return gen, blob
