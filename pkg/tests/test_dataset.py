import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackgan import imaging
from trackgan.dataset import (
    Camera,
    CorpusError,
    Sample,
    ScenarioTag,
    load_corpus,
    save_corpus,
    split,
)


def tiny_sample(name, value=0, tags=frozenset({ScenarioTag.NORMAL})):
    return Sample(
        name=name,
        image=np.full((4, 4, 3), value, dtype=np.uint8),
        mask=np.eye(4, dtype=np.uint8),
        tags=tags,
    )


def write_pair(root, stem, size=(4, 4), mask_size=None):
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    imaging.save_image(root / "images" / f"{stem}.png", np.zeros(size + (3,), dtype=np.uint8))
    if mask_size is not False:
        imaging.save_mask(root / "masks" / f"{stem}.png", np.zeros(mask_size or size, dtype=np.uint8))


def test_empty_directories(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    assert load_corpus(tmp_path) == []


def test_missing_masks_directory(tmp_path):
    (tmp_path / "images").mkdir()
    with pytest.raises(CorpusError, match="masks"):
        load_corpus(tmp_path)


def test_image_without_mask_named(tmp_path):
    write_pair(tmp_path, "front_left_0001")
    write_pair(tmp_path, "front_left_0002", mask_size=False)
    with pytest.raises(CorpusError, match="front_left_0002.png"):
        load_corpus(tmp_path)


def test_dimension_mismatch(tmp_path):
    write_pair(tmp_path, "a", size=(4, 4), mask_size=(4, 5))
    with pytest.raises(CorpusError):
        load_corpus(tmp_path)


def test_camera_and_tags(tmp_path):
    write_pair(tmp_path, "front_left_0001")
    write_pair(tmp_path, "front_right_0001")
    write_pair(tmp_path, "other")
    (tmp_path / "tags.csv").write_text("front_left_0001.png,blurry;dazzle_light\n")
    samples = {s.name: s for s in load_corpus(tmp_path)}
    assert samples["front_left_0001"].camera is Camera.FRONT_LEFT
    assert samples["front_right_0001"].camera is Camera.FRONT_RIGHT
    assert samples["other"].camera is Camera.SYNTHETIC
    assert samples["front_left_0001"].tags == {ScenarioTag.BLURRY, ScenarioTag.DAZZLE_LIGHT}
    assert samples["other"].tags == {ScenarioTag.NORMAL}


def test_real_corpus_counts(tmp_path):
    for i in range(607):
        write_pair(tmp_path, f"front_left_frame_{i:04d}", size=(2, 2))
    for i in range(791):
        write_pair(tmp_path, f"front_right_frame_{i:04d}", size=(2, 2))
    samples = load_corpus(tmp_path)
    assert len(samples) == 1398
    assert sum(s.camera is Camera.FRONT_LEFT for s in samples) == 607
    assert sum(s.camera is Camera.FRONT_RIGHT for s in samples) == 791


def test_save_load_round_trip(tmp_path):
    src = [
        tiny_sample("s0", 10, frozenset({ScenarioTag.CURVED_ROAD})),
        tiny_sample("s1", 20, frozenset({ScenarioTag.BLURRY, ScenarioTag.DAZZLE_LIGHT})),
    ]
    save_corpus(src, tmp_path)
    back = load_corpus(tmp_path)
    assert [s.name for s in back] == ["s0", "s1"]
    for a, b in zip(src, back):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.tags == b.tags


def test_normal_is_exclusive():
    with pytest.raises(CorpusError):
        tiny_sample("x", tags=frozenset({ScenarioTag.NORMAL, ScenarioTag.BLURRY}))
    with pytest.raises(CorpusError):
        tiny_sample("x", tags=frozenset())


def test_split_reference_corpus_counts():
    samples = [tiny_sample(f"s{i}") for i in range(1398)]
    sp = split(samples, 0.8, seed=0)
    assert (len(sp.train), len(sp.test)) == (1118, 280)


def test_split_half():
    samples = [tiny_sample(f"s{i}") for i in range(10)]
    sp = split(samples, 0.5, seed=123)
    assert len(sp.train) == len(sp.test) == 5
    assert not set(sp.train_names) & set(sp.test_names)


def test_split_errors():
    with pytest.raises(CorpusError):
        split([], 0.8)
    with pytest.raises(ValueError):
        split([tiny_sample("a")], 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_deterministic_and_disjoint(n, ratio, seed):
    samples = [tiny_sample(f"s{i}") for i in range(n)]
    a, b = split(samples, ratio, seed), split(samples, ratio, seed)
    assert a.train_names == b.train_names and a.test_names == b.test_names
    assert not set(a.train_names) & set(a.test_names)
    assert sorted(a.train_names + a.test_names) == sorted(s.name for s in samples)
    assert len(a.train) == int(np.floor(round(ratio * n, 9)))
