import numpy as np
import pytest

from thinseg.grid import (
    ColorImageError,
    FieldRangeError,
    UnreadableImageError,
    UnsupportedDepthError,
    as_mask,
    distance_sentinel,
    distance_transform_l1,
    inner_distance,
    load_field,
    load_mask,
    save_field,
)


def brute_force_l1(mask):
    """Independent oracle: minimum over all 1-pixels of |dx| + |dy|."""
    mask = np.asarray(mask)
    h, w = mask.shape
    ones = np.argwhere(mask == 1)
    if len(ones) == 0:
        return np.full((h, w), float(h + w))
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = np.abs(ones - (y, x)).sum(axis=1).min()
    return out


def test_single_center_pixel():
    mask = np.zeros((3, 3), dtype=np.uint8)
    mask[1, 1] = 1
    expected = [[2, 1, 2], [1, 0, 1], [2, 1, 2]]
    np.testing.assert_array_equal(distance_transform_l1(mask), expected)


def test_all_ones_is_zero_field():
    np.testing.assert_array_equal(distance_transform_l1(np.ones((4, 6), dtype=np.uint8)), 0.0)


def test_empty_mask_gives_sentinel():
    mask = np.zeros((4, 7), dtype=np.uint8)
    out = distance_transform_l1(mask)
    assert distance_sentinel(mask.shape) == 11.0
    np.testing.assert_array_equal(out, 11.0)


def test_matches_brute_force_on_random_masks():
    rng = np.random.default_rng(1234)
    for _ in range(100):
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))
        mask = (rng.random((h, w)) < rng.uniform(0.02, 0.6)).astype(np.uint8)
        np.testing.assert_array_equal(distance_transform_l1(mask), brute_force_l1(mask))


def test_zero_exactly_on_support():
    rng = np.random.default_rng(7)
    for _ in range(20):
        mask = (rng.random((12, 9)) < 0.3).astype(np.uint8)
        if not mask.any():
            continue
        d = distance_transform_l1(mask)
        np.testing.assert_array_equal(d == 0.0, mask == 1)


def test_lipschitz_in_l1():
    rng = np.random.default_rng(99)
    for _ in range(20):
        mask = (rng.random((10, 14)) < 0.15).astype(np.uint8)
        d = distance_transform_l1(mask)
        # adjacent pixels differ by at most 1 in both axes
        assert np.abs(np.diff(d, axis=0)).max(initial=0.0) <= 1.0
        assert np.abs(np.diff(d, axis=1)).max(initial=0.0) <= 1.0


def test_inner_distance_is_complement_transform():
    rng = np.random.default_rng(5)
    for _ in range(100):
        mask = (rng.random((16, 16)) < 0.5).astype(np.uint8)
        np.testing.assert_array_equal(inner_distance(mask), brute_force_l1(1 - mask))


def test_inner_distance_examples():
    mask = np.ones((5, 5), dtype=np.uint8)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 0
    assert inner_distance(mask)[2, 2] == 2.0

    single = np.zeros((5, 5), dtype=np.uint8)
    single[2, 2] = 1
    d = inner_distance(single)
    assert d[2, 2] == 1.0
    assert d.sum() == 1.0

    all_ones = np.ones((3, 4), dtype=np.uint8)
    np.testing.assert_array_equal(inner_distance(all_ones), 7.0)


def test_as_mask_rejects_non_binary():
    with pytest.raises(ValueError):
        as_mask(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        as_mask(np.zeros((0, 3)))


class TestMaskIO:
    def test_round_trip_binary(self, tmp_path):
        rng = np.random.default_rng(0)
        mask = (rng.random((9, 13)) < 0.4).astype(np.uint8)
        path = tmp_path / "mask.png"
        save_field(mask.astype(float), path)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_all_extremes(self, tmp_path):
        path = tmp_path / "ones.png"
        save_field(np.ones((4, 4)), path)
        np.testing.assert_array_equal(load_mask(path), 1)
        save_field(np.zeros((4, 4)), path)
        np.testing.assert_array_equal(load_mask(path), 0)

    def test_checkerboard(self, tmp_path):
        board = np.indices((6, 6)).sum(axis=0) % 2
        path = tmp_path / "board.png"
        save_field(board.astype(float), path)
        np.testing.assert_array_equal(load_mask(path), board)

    def test_quantization_round_half_up(self, tmp_path):
        path = tmp_path / "q.png"
        save_field(np.array([[0.5, 1.0, 0.0]]), path)
        np.testing.assert_allclose(load_field(path), [[128 / 255, 1.0, 0.0]])

    def test_out_of_range_raises(self, tmp_path):
        with pytest.raises(FieldRangeError):
            save_field(np.array([[1.2]]), tmp_path / "bad.png")
        with pytest.raises(FieldRangeError):
            save_field(np.array([[-0.1]]), tmp_path / "bad.png")

    def test_pgm_p2_and_p5(self, tmp_path):
        p2 = tmp_path / "a.pgm"
        p2.write_bytes(b"P2\n3 2\n255\n0 128 255\n10 200 30\n")
        np.testing.assert_array_equal(load_mask(p2), [[0, 1, 1], [0, 1, 0]])
        p5 = tmp_path / "b.pgm"
        p5.write_bytes(b"P5\n3 2\n255\n" + bytes([0, 128, 255, 10, 200, 30]))
        np.testing.assert_array_equal(load_mask(p5), [[0, 1, 1], [0, 1, 0]])

    def test_threshold(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P5\n2 1\n255\n" + bytes([100, 200]))
        np.testing.assert_array_equal(load_mask(path, threshold=150), [[0, 1]])
        np.testing.assert_array_equal(load_mask(path, threshold=100), [[1, 1]])

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(UnreadableImageError):
            load_mask(tmp_path / "missing.png")
        junk = tmp_path / "junk.png"
        junk.write_bytes(b"not an image")
        with pytest.raises(UnreadableImageError):
            load_mask(junk)

    def test_color_image_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "rgb.png"
        Image.new("RGB", (4, 4), (10, 20, 30)).save(path)
        with pytest.raises(ColorImageError):
            load_mask(path)

    def test_16bit_rejected(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n" + bytes([0, 1, 0, 2]))
        with pytest.raises(UnsupportedDepthError):
            load_mask(path)
