"""Complexity reporting: parameter and FLOP counts plus wall-clock inference time."""
from __future__ import annotations

import csv
import platform
import statistics
import time
from dataclasses import dataclass
from importlib import resources

import torch

from .networks import Generator, NetworkSpec, count_flops, count_params


@dataclass(frozen=True)
class Timing:
    median_ms: float
    trials_ms: tuple[float, ...]
    hardware: str


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    return f"{cpu}, torch {torch.__version__}, {torch.get_num_threads()} thread(s), {platform.system()}"


@torch.no_grad()
def measure_inference_ms(generator: Generator, input_dims: tuple[int, int], trials: int = 10, warmup: int = 2) -> Timing:
    """Median single-image forward time on a constant input."""
    if trials < 3:
        raise ValueError("trials must be >= 3")
    h, w = input_dims
    generator.eval()
    img = torch.full((1, 3, h, w), 0.5)
    guess = torch.full((1, 1, h, w), 0.5)
    for _ in range(warmup):
        generator(img, guess)
    times = []
    for _ in range(trials):
        start = time.perf_counter()
        generator(img, guess)
        times.append((time.perf_counter() - start) * 1e3)
    return Timing(statistics.median(times), tuple(times), hardware_descriptor())


@dataclass(frozen=True)
class ComplexityReport:
    flops: int
    params: int
    timing: Timing | None
    input_dims: tuple[int, int]

    @property
    def flops_g(self) -> float:
        return self.flops / 1e9

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    def csv_header(self) -> str:
        return "flops_g,params_m,inference_ms,height,width"

    def csv_row(self) -> str:
        ms = "" if self.timing is None else f"{self.timing.median_ms:.4f}"
        return f"{self.flops_g:.6f},{self.params_m:.6f},{ms},{self.input_dims[0]},{self.input_dims[1]}"

    def table(self) -> str:
        rows = [
            ("FLOPs (G)", f"{self.flops_g:.4f}"),
            ("Params (M)", f"{self.params_m:.4f}"),
            ("Params", str(self.params)),
        ]
        if self.timing is not None:
            rows.append(("Inf. Time (ms)", f"{self.timing.median_ms:.3f} (median of {len(self.timing.trials_ms)})"))
            rows.append(("Hardware", self.timing.hardware))
        rows.append(("Input", f"{self.input_dims[0]}x{self.input_dims[1]}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows) + "\n"


def complexity_report(spec: NetworkSpec, input_dims=(128, 128), trials: int = 0, seed: int = 0) -> ComplexityReport:
    """Counts for the generator; timing only when ``trials`` > 0."""
    timing = None
    if trials:
        if spec.is_empty("generator"):
            raise ValueError("cannot time an empty generator")
        torch.manual_seed(seed)
        timing = measure_inference_ms(Generator(spec), input_dims, trials)
    return ComplexityReport(count_flops(spec, input_dims), count_params(spec), timing, tuple(input_dims))


def published_table(name: str) -> list[dict[str, str]]:
    """Read-only reference rows shipped with the package ("metrics" or "complexity")."""
    text = resources.files("trackgan").joinpath(f"data/published_{name}.csv").read_text()
    return list(csv.DictReader(text.splitlines()))


def published_block(name: str) -> str:
    rows = published_table(name)
    cols = list(rows[0])
    widths = [max(len(c), *(len(r[c] or "-") for r in rows)) for c in cols]
    lines = [f"Published figures ({name}), for context only; not computed here"]
    lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for r in rows:
        lines.append("  ".join((r[c] or "-").ljust(w) for c, w in zip(cols, widths)))
    return "\n".join(lines) + "\n"
