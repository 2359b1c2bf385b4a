import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dilate_by_definition, erode_by_definition, flood_fill_filter
from trackgan.postprocess import (
    PostprocessConfig,
    StructuringElement,
    binarize,
    close,
    dilate,
    erode,
    filter_components,
    postprocess,
)


def random_element(rng, symmetric=False):
    k = int(rng.choice([1, 3, 5]))
    cells = rng.random((k, k)) < 0.5
    cells[k // 2, k // 2] = True
    if symmetric:
        cells |= cells[::-1, ::-1]
    return StructuringElement(cells)


def random_mask(rng, shape=(32, 32)):
    return (rng.random(shape) < rng.uniform(0.1, 0.9)).astype(np.uint8)


# -- binarize ------------------------------------------------------------

def test_binarize_threshold_rules():
    assert binarize(np.full((3, 3), 0.4), 0.5).sum() == 0
    assert binarize(np.full((3, 3), 0.5), 0.5).sum() == 9
    p = np.random.default_rng(0).random((6, 6))
    once = binarize(p, 0.5)
    np.testing.assert_array_equal(binarize(once.astype(float), 0.5), once)
    with pytest.raises(ValueError):
        binarize(p, 1.0)


# -- element -------------------------------------------------------------

def test_element_validation_and_rows():
    assert StructuringElement.from_rows("010;111;010").to_rows() == "010;111;010"
    with pytest.raises(ValueError):
        StructuringElement(np.ones((2, 2)))
    with pytest.raises(ValueError):
        StructuringElement(np.zeros((3, 3)))


# -- components ----------------------------------------------------------

def test_single_pixel_removed():
    m = np.zeros((5, 5), dtype=np.uint8)
    m[2, 2] = 1
    assert filter_components(m, PostprocessConfig(min_component_size=2)).sum() == 0


def test_component_at_min_size_kept():
    m = np.zeros((6, 6), dtype=np.uint8)
    m[1, 1:4] = 1
    np.testing.assert_array_equal(filter_components(m, PostprocessConfig(min_component_size=3)), m)


def test_diagonal_pair_connectivity():
    m = np.zeros((4, 4), dtype=np.uint8)
    m[1, 1] = m[2, 2] = 1
    eight = filter_components(m, PostprocessConfig(min_component_size=2, connectivity=8))
    four = filter_components(m, PostprocessConfig(min_component_size=2, connectivity=4))
    np.testing.assert_array_equal(eight, flood_fill_filter(m.tolist(), 2, 8))
    np.testing.assert_array_equal(four, flood_fill_filter(m.tolist(), 2, 4))
    assert eight.sum() == 2 and four.sum() == 0


@pytest.mark.parametrize("connectivity", [4, 8])
def test_components_match_flood_fill(connectivity):
    rng = np.random.default_rng(connectivity)
    for _ in range(40):
        m = (rng.random((20, 20)) < 0.3).astype(np.uint8)
        size = int(rng.integers(1, 8))
        cfg = PostprocessConfig(min_component_size=size, connectivity=connectivity)
        np.testing.assert_array_equal(filter_components(m, cfg), flood_fill_filter(m.tolist(), size, connectivity))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30))
def test_components_never_add(seed, size):
    m = random_mask(np.random.default_rng(seed), (16, 16))
    out = filter_components(m, PostprocessConfig(min_component_size=size))
    assert np.all(out <= m)


# -- dilation / erosion --------------------------------------------------

def test_dilate_empty_and_center():
    b = StructuringElement()
    assert dilate(np.zeros((5, 5), dtype=np.uint8), b).sum() == 0
    m = np.zeros((5, 5), dtype=np.uint8)
    m[2, 2] = 1
    expected = np.zeros((5, 5), dtype=np.uint8)
    expected[1:4, 1:4] = 1
    np.testing.assert_array_equal(dilate(m, b), expected)


def test_erode_full_single_empty():
    b = StructuringElement()
    full = np.ones((6, 7), dtype=np.uint8)
    expected = np.zeros_like(full)
    expected[1:-1, 1:-1] = 1
    np.testing.assert_array_equal(erode(full, b), expected)
    np.testing.assert_array_equal(erode(full, b), erode_by_definition(full.tolist(), b.cells.tolist()))
    single = np.zeros((5, 5), dtype=np.uint8)
    single[2, 2] = 1
    assert erode(single, b).sum() == 0
    assert erode(np.zeros((5, 5), dtype=np.uint8), b).sum() == 0


def test_asymmetric_element_translation_direction():
    # element holds the centre and the cell to its right
    b = StructuringElement.from_rows("000;011;000")
    m = np.zeros((1, 5), dtype=np.uint8)
    m[0, 2] = 1
    padded = np.zeros((3, 5), dtype=np.uint8)
    padded[1] = m[0]
    # z is hit when z or z+(0,1) lies in A
    np.testing.assert_array_equal(dilate(padded, b)[1], [0, 1, 1, 0, 0])


def test_morphology_matches_set_definitions():
    rng = np.random.default_rng(11)
    for _ in range(60):
        a = random_mask(rng)
        b = random_element(rng)
        np.testing.assert_array_equal(dilate(a, b), dilate_by_definition(a.tolist(), b.cells.tolist()))
        np.testing.assert_array_equal(erode(a, b), erode_by_definition(a.tolist(), b.cells.tolist()))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_extensive_and_anti_extensive(seed):
    rng = np.random.default_rng(seed)
    a, b = random_mask(rng, (16, 16)), random_element(rng)
    assert np.all(dilate(a, b) >= a)
    assert np.all(erode(a, b) <= a)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_duality_with_border_adjustment(seed):
    rng = np.random.default_rng(seed)
    a, b = random_mask(rng, (16, 16)), random_element(rng)
    # erosion of the complement with outside-the-grid read as foreground
    r = b.radius
    comp = np.pad(1 - a, r, constant_values=1)
    eroded = erode(comp, b)[r:-r or None, r:-r or None] if r else erode(comp, b)
    np.testing.assert_array_equal(1 - dilate(a, b), eroded)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_closing_idempotent_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_mask(rng, (16, 16)), random_element(rng, symmetric=True)
    once = close(a, b)
    np.testing.assert_array_equal(close(once, b), once)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_reflected_pairing_idempotent_for_any_element(seed):
    rng = np.random.default_rng(seed)
    a, b = random_mask(rng, (16, 16)), random_element(rng)
    op = lambda m: erode(dilate(m, b.reflect()), b)  # noqa: E731
    once = op(a)
    np.testing.assert_array_equal(op(once), once)


# -- pipeline ------------------------------------------------------------

def staged(p, cfg):
    m = (p >= cfg.binarize_threshold).astype(np.uint8)
    m = np.array(flood_fill_filter(m.tolist(), cfg.min_component_size, cfg.connectivity), dtype=np.uint8)
    cells = cfg.element.cells.tolist()
    return np.array(erode_by_definition(dilate_by_definition(m.tolist(), cells), cells), dtype=np.uint8)


def test_postprocess_zero():
    assert postprocess(np.zeros((16, 16))).sum() == 0


def test_postprocess_large_blob_interior_kept():
    p = np.zeros((32, 32))
    p[6:26, 8:24] = 0.9
    out = postprocess(p)
    np.testing.assert_array_equal(out, staged(p, PostprocessConfig()))
    assert np.all(out[6:26, 8:24] == 1)


def test_postprocess_bridges_one_pixel_gap():
    p = np.zeros((20, 30))
    p[5:15, 3:14] = 1.0
    p[5:15, 15:26] = 1.0
    cfg = PostprocessConfig(min_component_size=10)
    out = postprocess(p, cfg)
    np.testing.assert_array_equal(out, staged(p, cfg))
    assert np.all(out[6:14, 14] == 1)


def test_postprocess_removes_speckle_and_matches_stages():
    rng = np.random.default_rng(2)
    for _ in range(10):
        p = rng.random((24, 24)) * (rng.random((24, 24)) < 0.3)
        p[4:20, 4:20] = np.maximum(p[4:20, 4:20], 0.8)
        cfg = PostprocessConfig(min_component_size=int(rng.integers(1, 20)))
        np.testing.assert_array_equal(postprocess(p, cfg), staged(p, cfg))


def test_postprocess_pure():
    p = np.random.default_rng(3).random((16, 16))
    before = p.copy()
    a, b = postprocess(p), postprocess(p)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(p, before)


def test_min_size_scaling():
    assert PostprocessConfig().scaled_to(256, 256).min_component_size == 256
    assert PostprocessConfig().scaled_to(64, 64).min_component_size == 16
