import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deda.decouple import (Cdp, aggregate_masks, binarize, extract_cdp,
                           extract_cip, mask_bbox)
from deda.errors import NoBackgroundError, NoForegroundError
from deda.imagecore import Placement, composite_over

from conftest import random_rgb


def square_mask(h, w, top, left, size, value=255):
    m = np.zeros((h, w), dtype=np.uint8)
    m[top:top + size, left:left + size] = value
    return m


# ---------------------------------------------------------------------------
# aggregate_masks

def test_aggregate_single_mask_is_identity():
    m = square_mask(8, 8, 2, 2, 3, value=200)
    assert np.array_equal(aggregate_masks([m]), m)


def test_aggregate_disjoint_binary_masks_union_area():
    a = square_mask(10, 10, 0, 0, 3)
    b = square_mask(10, 10, 6, 6, 4)
    union = aggregate_masks([a, b])
    assert (union >= 128).sum() == (a >= 128).sum() + (b >= 128).sum()


def test_aggregate_is_pixelwise_max():
    a = np.array([[0, 200]], dtype=np.uint8)
    b = np.array([[150, 0]], dtype=np.uint8)
    assert aggregate_masks([a, b]).tolist() == [[150, 200]]


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate_masks([])
    with pytest.raises(ValueError):
        aggregate_masks([square_mask(4, 4, 0, 0, 2), square_mask(4, 5, 0, 0, 2)])


@given(st.integers(0, 500))
@settings(max_examples=30, deadline=None)
def test_aggregate_idempotent_commutative_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.integers(0, 256, size=(6, 6), dtype=np.uint8) for _ in range(3))
    assert np.array_equal(aggregate_masks([a, a]), a)
    assert np.array_equal(aggregate_masks([a, b]), aggregate_masks([b, a]))
    assert np.array_equal(
        binarize(aggregate_masks([aggregate_masks([a, b]), c])),
        binarize(aggregate_masks([a, aggregate_masks([b, c])])))


# ---------------------------------------------------------------------------
# extract_cdp / extract_cip

def test_extract_known_square():
    rng = np.random.default_rng(1)
    img = random_rgb(rng, 12, 12)
    mask = square_mask(12, 12, 3, 4, 5)
    cdp = extract_cdp(img, mask, class_id=2, source_id="img0")
    assert cdp.sprite.shape == (5, 5, 4)
    assert np.array_equal(cdp.sprite[:, :, :3], img[3:8, 4:9])
    assert (cdp.sprite[:, :, 3] == 255).all()
    assert cdp.kind == "real"
    assert cdp.class_id == 2
    assert cdp.alpha_area == 25.0


def test_full_mask_raises_no_background():
    rng = np.random.default_rng(2)
    img = random_rgb(rng, 6, 6)
    mask = np.full((6, 6), 255, dtype=np.uint8)
    with pytest.raises(NoBackgroundError):
        extract_cdp(img, mask, 0)
    with pytest.raises(NoBackgroundError):
        extract_cip(img, mask, 0)


def test_empty_mask_raises_no_foreground():
    rng = np.random.default_rng(3)
    img = random_rgb(rng, 6, 6)
    mask = np.zeros((6, 6), dtype=np.uint8)
    with pytest.raises(NoForegroundError):
        extract_cdp(img, mask, 0)
    with pytest.raises(NoForegroundError):
        extract_cip(img, mask, 0)


def test_two_disjoint_blobs_share_one_bounding_box():
    # blobs at rows 2-4 x cols 3-5 and rows 10-13 x cols 9-12 on a 16x16
    # canvas: joint bbox rows 2..13, cols 3..12 -> 12x10 sprite
    rng = np.random.default_rng(4)
    img = random_rgb(rng, 16, 16)
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[2:5, 3:6] = 255
    mask[10:14, 9:13] = 255
    assert mask_bbox(mask) == (2, 3, 14, 13)
    cdp = extract_cdp(img, mask, 1)
    assert cdp.sprite.shape == (12, 10, 4)
    # transparent between the blobs
    assert (cdp.sprite[:, :, 3] == mask[2:14, 3:13]).all()
    assert cdp.sprite[4, 4, 3] == 0


def test_cip_hole_complements_cdp_alpha():
    rng = np.random.default_rng(5)
    img = random_rgb(rng, 16, 16)
    mask = np.zeros((16, 16), dtype=np.uint8)
    mask[2:5, 3:6] = 255
    mask[10:14, 9:13] = 200      # soft but above threshold
    cdp = extract_cdp(img, mask, 1)
    cip = extract_cip(img, mask, 1)
    assert np.array_equal(cip.pixels, img)
    top, left, bottom, right = mask_bbox(mask)
    placed = np.zeros((16, 16), dtype=bool)
    placed[top:bottom, left:right] = cdp.sprite[:, :, 3] >= 128
    hole = cip.hole >= 128
    assert np.array_equal(placed, hole)                    # partition
    assert not (placed & ~hole).any() and not (~placed & hole).any()


@given(st.integers(0, 300))
@settings(max_examples=30, deadline=None)
def test_paste_back_reproduces_masked_pixels(seed):
    # binary masks round-trip exactly: sprite composited at its bbox offset
    # restores every masked pixel on any background
    rng = np.random.default_rng(seed)
    img = random_rgb(rng, 14, 14)
    mask = np.zeros((14, 14), dtype=np.uint8)
    n_px = int(rng.integers(1, 40))
    ys, xs = rng.integers(0, 14, n_px), rng.integers(0, 14, n_px)
    mask[ys, xs] = 255
    if (mask >= 128).all():
        return
    cdp = extract_cdp(img, mask, 0)
    top, left, _, _ = mask_bbox(mask)
    background = random_rgb(rng, 14, 14)
    out, _ = composite_over(background, cdp.sprite, Placement(1.0, False, left, top))
    fg = mask >= 128
    assert np.array_equal(out[fg], img[fg])


def test_cdp_invariant_checks():
    sprite = np.zeros((3, 3, 4), dtype=np.uint8)
    sprite[1, 1, 3] = 255   # not tight: border rows/cols empty
    with pytest.raises(ValueError):
        Cdp(sprite=sprite, class_id=0, kind="real", source_id="", alpha_area=1.0)
    good = np.zeros((1, 1, 4), dtype=np.uint8)
    good[0, 0, 3] = 255
    with pytest.raises(ValueError):
        Cdp(sprite=good, class_id=0, kind="real", source_id="",
            alpha_area=1.0, parent_id="x")
    with pytest.raises(ValueError):
        Cdp(sprite=good, class_id=0, kind="nope", source_id="", alpha_area=1.0)
