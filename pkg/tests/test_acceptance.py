"""Acceptance suite. Each test prints one ``[criterion N] PASS|FAIL`` line.

The training criteria (5 and 6) share one run on a 512-sample synthetic corpus
at 128x128 and take roughly 15 minutes on a single CPU core.
"""
import time

import numpy as np
import pytest
import torch

from oracles import dilate_by_definition, erode_by_definition, metrics_from_walk, pixel_walk_counts
from test_cli import tree_equal
from trackgan.cli import main
from trackgan.dataset import split
from trackgan.metrics import METRIC_NAMES, confusion, corpus_eval, from_counts
from trackgan.networks import Critic, Generator, LayerSpec, count_params, default_spec, layer_flops
from trackgan.postprocess import StructuringElement, binarize, close, dilate, erode, postprocess
from trackgan.synth import SynthConfig, synth_corpus
from trackgan.training import (
    TrainConfig,
    adv_loss_discriminator,
    adv_loss_generator,
    domain_loss,
    equilibrium_report,
    fit,
    new_state,
    predict,
    prepare,
)


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, passed: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        assert passed, f"criterion {number} ({title}): {detail}"

    return emit


def random_element(rng, symmetric=False):
    k = int(rng.choice([1, 3, 5]))
    cells = rng.random((k, k)) < 0.5
    cells[k // 2, k // 2] = True
    if symmetric:
        cells |= cells[::-1, ::-1]
    return StructuringElement(cells)


# -- 1 ---------------------------------------------------------------------

def test_criterion_1_metrics_oracle(verdict):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        pred = (rng.random((16, 16)) < rng.random()).astype(np.uint8)
        label = (rng.random((16, 16)) < rng.random()).astype(np.uint8)
        c = confusion(pred, label)
        report = from_counts(c)
        oracle = metrics_from_walk(pred.tolist(), label.tolist())
        same = (c.tp, c.tn, c.fp, c.fn) == pixel_walk_counts(pred.tolist(), label.tolist())
        same &= all(getattr(report, k) == oracle[k] for k in METRIC_NAMES)
        mismatches += not same
    elapsed = time.perf_counter() - start
    verdict(1, "metrics oracle", mismatches == 0 and elapsed < 10, f"{mismatches} mismatches in 1000 pairs, {elapsed:.2f} s")


# -- 2 ---------------------------------------------------------------------

def test_criterion_2_morphology_oracle(verdict):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(500):
        a = (rng.random((32, 32)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        b = random_element(rng)
        cells = b.cells.tolist()
        ok = np.array_equal(dilate(a, b), dilate_by_definition(a.tolist(), cells))
        ok &= np.array_equal(erode(a, b), erode_by_definition(a.tolist(), cells))
        mismatches += not ok
    elapsed = time.perf_counter() - start
    verdict(2, "morphology oracle", mismatches == 0 and elapsed < 60, f"{mismatches} mismatches in 500 masks, {elapsed:.1f} s")


# -- 3 ---------------------------------------------------------------------

def test_criterion_3_closing_properties(verdict):
    rng = np.random.default_rng(3)
    failures = {"extensive": 0, "anti-extensive": 0, "idempotent": 0}
    for i in range(200):
        a = (rng.random((32, 32)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
        # closing is idempotent for centrally symmetric elements, which
        # includes the default 3x3 square
        b = StructuringElement() if i % 4 == 0 else random_element(rng, symmetric=True)
        failures["extensive"] += not np.all(dilate(a, b) >= a)
        failures["anti-extensive"] += not np.all(erode(a, b) <= a)
        once = close(a, b)
        failures["idempotent"] += not np.array_equal(close(once, b), once)
    detail = ", ".join(f"{k} failures {v}" for k, v in failures.items()) + " over 200 masks"
    verdict(3, "closing properties", not any(failures.values()), detail)


# -- 4 ---------------------------------------------------------------------

def _numeric_grad(f, x, h=1e-6):
    grad = torch.zeros_like(x)
    for i in range(x.numel()):
        orig = x.view(-1)[i].item()
        x.view(-1)[i] = orig + h
        up = f(x).item()
        x.view(-1)[i] = orig - h
        down = f(x).item()
        x.view(-1)[i] = orig
        grad.view(-1)[i] = (up - down) / (2 * h)
    return grad


def test_criterion_4_gradient_checks(verdict):
    worst = 0.0
    for trial in range(50):
        g = torch.Generator().manual_seed(1000 + trial)
        x0 = 0.05 + 0.9 * torch.rand(4, 4, generator=g, dtype=torch.float64)
        other = 0.05 + 0.9 * torch.rand(4, 4, generator=g, dtype=torch.float64)
        mask = (torch.rand(4, 4, generator=g, dtype=torch.float64) < 0.5).double()
        for f in (
            lambda x: domain_loss(x, mask),
            lambda x: adv_loss_generator(x),
            lambda x: adv_loss_discriminator(x, other),
            lambda x: adv_loss_discriminator(other, x),
        ):
            x = x0.clone().requires_grad_(True)
            f(x).backward()
            numeric = _numeric_grad(f, x0.clone())
            err = ((x.grad - numeric).norm() / max(x.grad.norm().item(), numeric.norm().item())).item()
            worst = max(worst, err)
    verdict(4, "gradient checks", worst < 1e-4, f"max relative error {worst:.2e} over 50 trials x 4 losses")


# -- 5 and 6 ---------------------------------------------------------------

@pytest.fixture(scope="session")
def reference_run():
    samples = synth_corpus(512, seed=0, cfg=SynthConfig(resolution=128))
    parts = split(samples, 0.8, seed=0)
    cfg = TrainConfig(seed=0)
    assert cfg.epochs <= 40
    state = new_state(default_spec(), cfg)
    start = time.perf_counter()
    fit(state, prepare(parts.train), cfg)
    elapsed = time.perf_counter() - start
    test = prepare(parts.test)
    probs = predict(state.generator, test.images, test.guesses)
    labels = [s.mask for s in parts.test]
    raw = corpus_eval([(binarize(p), y) for p, y in zip(probs, labels)], "micro")
    post = corpus_eval([(postprocess(p), y) for p, y in zip(probs, labels)], "micro")
    return {"state": state, "cfg": cfg, "raw": raw, "post": post, "elapsed": elapsed, "split": parts}


def test_criterion_5_equilibrium(verdict, reference_run):
    state = reference_run["state"]
    assert len(reference_run["split"].train) == 409 and len(reference_run["split"].test) == 103
    report = equilibrium_report(state.history, band=0.15)
    window = report.window
    detail = (
        f"{len(state.history)} epochs, final-quarter accuracies "
        f"[{', '.join(f'{a:.3f}' for a in window)}], band [0.35, 0.65], "
        f"training {reference_run['elapsed'] / 60:.1f} min"
    )
    verdict(5, "equilibrium", report.passed and all(0.35 <= a <= 0.65 for a in window), detail)


def test_criterion_6_smoke_quality(verdict, reference_run):
    raw, post = reference_run["raw"].miou, reference_run["post"].miou
    passed = post >= 0.80 and post >= raw - 0.02
    verdict(6, "end-to-end quality", passed, f"micro mIoU post {post:.4f} (>= 0.80), raw {raw:.4f}, delta {post - raw:+.4f}")


# -- 7 ---------------------------------------------------------------------

def test_criterion_7_complexity(verdict):
    spec = default_spec()
    params = count_params(spec)
    walk = sum(p.numel() for p in Generator(spec).parameters())
    walk_critic = sum(p.numel() for p in Critic(spec).parameters())
    fixtures = [
        (LayerSpec("conv", 1, 1, 3, 1, 1), (1, 8, 8), 1152),
        (LayerSpec("conv", 3, 8, 5, 2, 2, act="relu"), (3, 16, 16), 2 * 25 * 3 * 8 * 64 + 512),
        (LayerSpec("convT", 16, 8, 4, 2, 1, norm=True), (16, 8, 8), 2 * 16 * 16 * 8 * 64 + 2048),
    ]
    flops_ok = all(layer_flops(layer, shape) == want for layer, shape, want in fixtures)
    passed = 1_100_000 <= params <= 2_100_000 and params == walk and count_params(spec, "critic") == walk_critic and flops_ok
    verdict(7, "complexity bracket", passed, f"params {params:,} (walk {walk:,}), FLOPs fixtures {'match' if flops_ok else 'differ'}")


# -- 8 ---------------------------------------------------------------------

def test_criterion_8_all_positive_predictor(verdict):
    rng = np.random.default_rng(8)
    failures = 0
    for trial in range(20):
        size = int(rng.choice([16, 32, 48]))
        corpus = synth_corpus(int(rng.integers(1, 6)), seed=int(rng.integers(0, 10_000)), cfg=SynthConfig(resolution=size))
        labels = [s.mask for s in corpus]
        pairs = [(np.ones_like(y), y) for y in labels]
        prevalence = sum(int(y.sum()) for y in labels) / sum(y.size for y in labels)
        r = corpus_eval(pairs, "micro")
        failures += not (r.recall == 1 and r.specificity == 0 and r.precision == prevalence)
    verdict(8, "all-positive predictor", failures == 0, f"{failures} failures over 20 corpora")


# -- 9 ---------------------------------------------------------------------

def test_criterion_9_determinism(verdict, tmp_path):
    (tmp_path / "run.ini").write_text("[run]\nseed = 7\n[train]\nepochs = 2\nbatch_size = 4\n[synth]\nresolution = 64\n")
    common = ["--config", str(tmp_path / "run.ini"), "--seed", "7", "--deterministic"]
    codes = []
    for i in (1, 2):
        codes.append(main(["synth", "-n", "10", *common, "--out", str(tmp_path / f"data{i}")]))
        codes.append(main(["train", "--data", str(tmp_path / "data1"), *common, "--out", str(tmp_path / f"train{i}")]))
    synth_same = tree_equal(tmp_path / "data1", tmp_path / "data2")
    train_same = tree_equal(tmp_path / "train1", tmp_path / "train2")
    files = sum(1 for p in (tmp_path / "train1").rglob("*") if p.is_file())
    passed = codes == [0, 0, 0, 0] and synth_same and train_same
    verdict(9, "determinism", passed, f"synth trees identical: {synth_same}, train trees identical: {train_same} ({files} files)")
