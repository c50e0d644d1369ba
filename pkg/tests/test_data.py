"""IDX parsing, pair construction, splits, supervision, and PGM round-trips."""
import struct

import numpy as np
import pytest

from vael import synth
from vael.data import (
    IdxFormatError,
    InsufficientDataError,
    PgmFormatError,
    build_pairs,
    data_efficiency_splits,
    idx_image_bytes,
    idx_label_bytes,
    load_pair_dataset,
    manifest_text,
    ordered_pairs,
    parse_idx,
    pgm_bytes,
    read_pgm,
    save_pair_dataset,
    supervision_subset,
    write_pgm,
)


@pytest.fixture(scope="module")
def source3():
    return synth.make_source(1200, digit_set=(0, 1, 2), seed=7)


@pytest.fixture(scope="module")
def source10():
    return synth.make_source(4000, digit_set=range(10), seed=7)


class TestIdx:
    def test_handcrafted_fixture_parses_exactly(self):
        # 1 image of 2x2 with known byte values
        payload = bytes([0, 51, 102, 255])
        blob = struct.pack(">IIII", 0x00000803, 1, 2, 2) + payload
        images = parse_idx(blob)
        assert images.shape == (1, 2, 2)
        assert np.array_equal(images[0], np.array([[0, 51], [102, 255]]) / 255.0)

    def test_label_fixture(self):
        blob = struct.pack(">II", 0x00000801, 3) + bytes([7, 0, 9])
        assert np.array_equal(parse_idx(blob), [7, 0, 9])

    def test_bad_magic(self):
        blob = struct.pack(">IIII", 0x00000802, 1, 2, 2) + bytes(4)
        with pytest.raises(IdxFormatError):
            parse_idx(blob)

    def test_payload_length_mismatch(self):
        blob = struct.pack(">IIII", 0x00000803, 1, 2, 2) + bytes(3)
        with pytest.raises(IdxFormatError):
            parse_idx(blob)
        blob = struct.pack(">IIII", 0x00000803, 1, 2, 2) + bytes(5)
        with pytest.raises(IdxFormatError):
            parse_idx(blob)

    def test_image_encode_round_trip(self, source3):
        images, _ = source3
        again = parse_idx(idx_image_bytes(images[:5]))
        assert np.max(np.abs(again - images[:5])) <= 1.0 / 255.0

    def test_label_encode_round_trip(self):
        labels = np.array([0, 5, 18])
        assert np.array_equal(parse_idx(idx_label_bytes(labels)), labels)


class TestBuildPairs:
    def test_three_digit_labels_and_shape(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=300, digit_set=(0, 1, 2), seed=0)
        assert ds.images.shape == (300, 28, 56)
        assert set(np.unique(ds.label)) <= set(range(5))
        assert np.array_equal(ds.label, ds.left + ds.right)

    def test_ten_digit_label_range(self, source10):
        images, labels = source10
        ds = build_pairs(images, labels, count=400, digit_set=range(10), seed=0)
        assert ds.label.min() >= 0 and ds.label.max() <= 18
        assert len(np.unique(ds.label)) == 19 or len(ds) < 1000  # all sums reachable

    def test_split_ratios(self, source3, source10):
        images, labels = source3
        ds = build_pairs(images, labels, count=1000, digit_set=(0, 1, 2), seed=0)
        assert len(ds.indices("train")) == 800
        assert len(ds.indices("val")) == 100
        assert len(ds.indices("test")) == 100
        images, labels = source10
        ds = build_pairs(images, labels, count=1000, digit_set=range(10), seed=0)
        assert len(ds.indices("train")) == 650
        assert len(ds.indices("val")) == 200
        assert len(ds.indices("test")) == 150

    def test_splits_disjoint_and_cover(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=250, digit_set=(0, 1, 2), seed=3)
        total = sum(len(ds.indices(s)) for s in ("train", "val", "test"))
        assert total == 250

    def test_pair_counts_uniform(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=10_000, digit_set=(0, 1, 2), seed=1)
        n, k = 10_000, 9
        sigma = np.sqrt((1 / k) * (1 - 1 / k) / n)
        for a, b in ordered_pairs((0, 1, 2)):
            freq = np.mean((ds.left == a) & (ds.right == b))
            assert abs(freq - 1 / k) <= 3 * sigma

    def test_image_is_concatenation_of_sources(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=50, digit_set=(0, 1, 2), seed=5)
        # every half must be one of the source images with the matching label
        halves = {d: images[labels == d] for d in (0, 1, 2)}
        for i in range(10):
            lhs, rhs = ds.images[i, :, :28], ds.images[i, :, 28:]
            assert any(np.array_equal(lhs, s) for s in halves[ds.left[i]])
            assert any(np.array_equal(rhs, s) for s in halves[ds.right[i]])

    def test_pure_function_of_seed(self, source3):
        images, labels = source3
        a = build_pairs(images, labels, count=120, digit_set=(0, 1, 2), seed=11)
        b = build_pairs(images, labels, count=120, digit_set=(0, 1, 2), seed=11)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.left, b.left)

    def test_missing_class_rejected(self, source3):
        images, labels = source3
        with pytest.raises(InsufficientDataError):
            build_pairs(images, labels, count=10, digit_set=(0, 1, 9), seed=0)


class TestDataEfficiency:
    def test_sizes_and_nesting(self, source10):
        images, labels = source10
        ds = build_pairs(images, labels, count=26000, digit_set=range(10), seed=2)
        subsets = data_efficiency_splits(ds, sizes=[10, 20])
        assert len(subsets[0]) == 1000  # 100 ordered pairs x 10
        assert len(subsets[1]) == 2000
        assert set(subsets[0]) < set(subsets[1])

    def test_exact_per_pair_counts(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=3000, digit_set=(0, 1, 2), seed=2)
        (subset,) = data_efficiency_splits(ds, sizes=[100])
        assert len(subset) == 900  # 9 pairs x 100
        for a, b in ordered_pairs((0, 1, 2)):
            count = np.sum((ds.left[subset] == a) & (ds.right[subset] == b))
            assert count == 100

    def test_underrepresented_pair(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=100, digit_set=(0, 1, 2), seed=2)
        with pytest.raises(InsufficientDataError):
            data_efficiency_splits(ds, sizes=[50])


class TestSupervisionSubset:
    def test_sizes(self, source3, source10):
        images, labels = source3
        ds = build_pairs(images, labels, count=1000, digit_set=(0, 1, 2), seed=4)
        assert len(supervision_subset(ds)) == 9
        images, labels = source10
        ds = build_pairs(images, labels, count=4000, digit_set=range(10), seed=4)
        assert len(supervision_subset(ds)) == 100

    def test_first_occurrence_and_determinism(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=1000, digit_set=(0, 1, 2), seed=4)
        subset = supervision_subset(ds)
        assert np.array_equal(subset, supervision_subset(ds))
        train_idx = ds.indices("train")
        for i in subset:
            pair = (ds.left[i], ds.right[i])
            earlier = [
                j
                for j in train_idx
                if j < i and (ds.left[j], ds.right[j]) == pair
            ]
            assert not earlier

    def test_missing_pair(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=6, digit_set=(0, 1, 2), seed=4)
        with pytest.raises(InsufficientDataError):
            supervision_subset(ds)


class TestPgm:
    def test_header_of_zero_image(self):
        blob = pgm_bytes(np.zeros((28, 56)))
        assert blob.startswith(b"P5\n56 28\n255\n")
        assert blob[13:] == bytes(28 * 56)

    def test_round_trip_error_bound(self, tmp_path, rng):
        img = rng.uniform(0, 1, size=(28, 56))
        path = tmp_path / "x.pgm"
        write_pgm(img, path)
        again = read_pgm(path)
        assert again.shape == (28, 56)
        assert np.max(np.abs(again - img)) <= 1.0 / 255.0

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n2 2\n255\n....")
        with pytest.raises(PgmFormatError):
            read_pgm(path)
        path.write_bytes(b"P5\n2 2\n17\n" + bytes(4))
        with pytest.raises(PgmFormatError):
            read_pgm(path)


class TestBundle:
    def test_save_load_round_trip(self, tmp_path, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=200, digit_set=(0, 1, 2), seed=9)
        ds.mark_supervised(supervision_subset(ds))
        save_pair_dataset(ds, tmp_path / "bundle")
        again = load_pair_dataset(tmp_path / "bundle")
        assert np.array_equal(again.left, ds.left)
        assert np.array_equal(again.right, ds.right)
        assert np.array_equal(again.label, ds.label)
        assert np.array_equal(again.split, ds.split)
        assert np.array_equal(again.supervised, ds.supervised)
        assert np.max(np.abs(again.images - ds.images)) <= 1.0 / 255.0

    def test_manifest_fields(self, source3):
        images, labels = source3
        ds = build_pairs(images, labels, count=20, digit_set=(0, 1, 2), seed=9)
        text = manifest_text(ds)
        header = text.splitlines()[0]
        assert header == "filename_or_offset,left_digit,right_digit,sum,split,supervised_flag"
        assert len(text.splitlines()) == 21
