"""Paired-digit datasets: IDX parsing, pair construction, splits, PGM I/O.

A pair record is the horizontal concatenation of two source digits (28x56 by
default), labelled with the sum of the digit labels.  Dataset construction is
a pure function of (source arrays, digit set, count, seed).
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SPLIT_NAMES = ("train", "val", "test")


class DataError(Exception):
    pass


class IdxFormatError(DataError):
    pass


class PgmFormatError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


# ---------------------------------------------------------------------------
# IDX (big-endian magic + extents, unsigned byte payload)
# ---------------------------------------------------------------------------

def parse_idx(data: bytes):
    """Images (magic 0x803) -> float64 (N, H, W) in [0,1]; labels (0x801) -> int64 (N,)."""
    if len(data) < 4:
        raise IdxFormatError("truncated IDX header")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IDX_IMAGES_MAGIC:
        if len(data) < 16:
            raise IdxFormatError("truncated IDX image header")
        n, rows, cols = struct.unpack_from(">III", data, 4)
        payload = data[16:]
        if len(payload) != n * rows * cols:
            raise IdxFormatError(
                f"IDX payload is {len(payload)} bytes, extents need {n * rows * cols}"
            )
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
        return arr.astype(np.float64) / 255.0
    if magic == IDX_LABELS_MAGIC:
        if len(data) < 8:
            raise IdxFormatError("truncated IDX label header")
        (n,) = struct.unpack_from(">I", data, 4)
        payload = data[8:]
        if len(payload) != n:
            raise IdxFormatError(f"IDX payload is {len(payload)} bytes, extents need {n}")
        return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    raise IdxFormatError(f"bad IDX magic 0x{magic:08x}")


def read_idx(path):
    with open(path, "rb") as fh:
        return parse_idx(fh.read())


def idx_image_bytes(images) -> bytes:
    """Encode float [0,1] or uint8 images as IDX bytes."""
    arr = np.asarray(images)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = arr.shape
    return struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + arr.tobytes()


def idx_label_bytes(labels) -> bytes:
    arr = np.asarray(labels)
    if np.any(arr < 0) or np.any(arr > 255):
        raise IdxFormatError("IDX labels must fit in one unsigned byte")
    return struct.pack(">II", IDX_LABELS_MAGIC, len(arr)) + arr.astype(np.uint8).tobytes()


def write_idx_images(path, images):
    with open(path, "wb") as fh:
        fh.write(idx_image_bytes(images))


def write_idx_labels(path, labels):
    with open(path, "wb") as fh:
        fh.write(idx_label_bytes(labels))


# ---------------------------------------------------------------------------
# pair dataset
# ---------------------------------------------------------------------------

@dataclass
class PairDataset:
    images: np.ndarray  # (N, H, 2W) float64 in [0, 1]
    left: np.ndarray  # (N,) left digit labels
    right: np.ndarray  # (N,) right digit labels
    label: np.ndarray  # (N,) sums
    split: np.ndarray  # (N,) unicode: train/val/test
    supervised: np.ndarray  # (N,) bool: digit labels exposed during training
    digit_set: tuple = ()

    def __len__(self):
        return len(self.images)

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLIT_NAMES:
            raise DataError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def mark_supervised(self, indices):
        self.supervised[:] = False
        self.supervised[indices] = True


def split_ratios_for(digit_set) -> tuple:
    return (0.8, 0.1, 0.1) if len(digit_set) == 3 else (0.65, 0.2, 0.15)


def build_pairs(images, labels, count, digit_set, seed, ratios=None) -> PairDataset:
    """Uniformly random ordered digit pairs over ``digit_set``.

    Source digits are consumed without replacement per class until exhausted,
    then drawn with replacement.  Split assignment is contiguous over the
    generated order: train, then val, then test.
    """
    digit_set = tuple(sorted(digit_set))
    if not set(digit_set) <= set(range(10)):
        raise DataError(f"digit set {digit_set} outside 0..9")
    ratios = split_ratios_for(digit_set) if ratios is None else tuple(ratios)
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise DataError(f"split ratios {ratios} must be three values summing to 1")

    rng = np.random.default_rng(seed)
    by_class = {d: np.flatnonzero(labels == d) for d in digit_set}
    for d, idx in by_class.items():
        if len(idx) == 0:
            raise InsufficientDataError(f"no source images for digit {d}")

    queues = {d: list(rng.permutation(idx)) for d, idx in by_class.items()}

    def draw(d):
        q = queues[d]
        if q:
            return int(q.pop())
        return int(by_class[d][rng.integers(0, len(by_class[d]))])

    pair_choices = rng.integers(0, len(digit_set), size=(count, 2))
    h, w = images.shape[1], images.shape[2]
    out = np.empty((count, h, 2 * w), dtype=np.float64)
    left = np.empty(count, dtype=np.int64)
    right = np.empty(count, dtype=np.int64)
    for i in range(count):
        ld, rd = digit_set[pair_choices[i, 0]], digit_set[pair_choices[i, 1]]
        out[i, :, :w] = images[draw(ld)]
        out[i, :, w:] = images[draw(rd)]
        left[i], right[i] = ld, rd

    n_train = int(count * ratios[0])
    n_val = int(count * ratios[1])
    split = np.empty(count, dtype="U5")
    split[:n_train] = "train"
    split[n_train : n_train + n_val] = "val"
    split[n_train + n_val :] = "test"

    return PairDataset(
        images=out,
        left=left,
        right=right,
        label=left + right,
        split=split,
        supervised=np.zeros(count, dtype=bool),
        digit_set=digit_set,
    )


def ordered_pairs(digit_set):
    return [(a, b) for a in digit_set for b in digit_set]


def data_efficiency_splits(dataset: PairDataset, sizes) -> list:
    """Nested train subsets with exactly ``s`` records per ordered pair.

    Returns one index array per requested size; each is a prefix-per-pair of
    the next, so smaller subsets are contained in larger ones.
    """
    train_idx = dataset.indices("train")
    per_pair = {}
    for pair in ordered_pairs(dataset.digit_set):
        mask = (dataset.left[train_idx] == pair[0]) & (dataset.right[train_idx] == pair[1])
        per_pair[pair] = train_idx[mask]
    subsets = []
    for s in sorted(sizes):
        chosen = []
        for pair, idx in per_pair.items():
            if len(idx) < s:
                raise InsufficientDataError(
                    f"pair {pair} has only {len(idx)} training records, need {s}"
                )
            chosen.append(idx[:s])
        subsets.append(np.sort(np.concatenate(chosen)))
    return subsets


def supervision_subset(dataset: PairDataset, within=None) -> np.ndarray:
    """First training occurrence of each ordered pair; |digit_set|^2 records."""
    train_idx = dataset.indices("train") if within is None else np.asarray(within)
    chosen = []
    for pair in ordered_pairs(dataset.digit_set):
        mask = (dataset.left[train_idx] == pair[0]) & (dataset.right[train_idx] == pair[1])
        hits = train_idx[mask]
        if len(hits) == 0:
            raise InsufficientDataError(f"ordered pair {pair} missing from the training split")
        chosen.append(hits[0])
    return np.array(sorted(chosen))


# ---------------------------------------------------------------------------
# PGM (P5 binary, maxval 255)
# ---------------------------------------------------------------------------

def pgm_bytes(image) -> bytes:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise PgmFormatError(f"PGM wants a 2-D image, got shape {arr.shape}")
    h, w = arr.shape
    payload = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode() + payload.tobytes()


def write_pgm(image, path):
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(image))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise PgmFormatError("not a binary PGM (P5) file")
    # header: three whitespace-separated fields after the magic, '#' comments allowed
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError("truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise PgmFormatError(f"malformed PGM header: {exc}") from exc
    if maxval != 255:
        raise PgmFormatError(f"unsupported PGM maxval {maxval}")
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise PgmFormatError("truncated PGM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# manifest + on-disk dataset bundle
# ---------------------------------------------------------------------------

MANIFEST_FIELDS = ("filename_or_offset", "left_digit", "right_digit", "sum", "split", "supervised_flag")


def manifest_text(dataset: PairDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(MANIFEST_FIELDS)
    for i in range(len(dataset)):
        writer.writerow(
            [
                i,
                int(dataset.left[i]),
                int(dataset.right[i]),
                int(dataset.label[i]),
                dataset.split[i],
                int(dataset.supervised[i]),
            ]
        )
    return buf.getvalue()


def save_pair_dataset(dataset: PairDataset, directory):
    """pairs.idx (IDX-encoded images) + manifest.csv, aligned by record offset."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_idx_images(directory / "pairs.idx", dataset.images)
    (directory / "manifest.csv").write_text(manifest_text(dataset))


def load_pair_dataset(directory) -> PairDataset:
    from pathlib import Path

    directory = Path(directory)
    images = read_idx(directory / "pairs.idx")
    rows = list(csv.DictReader((directory / "manifest.csv").open()))
    if len(rows) != len(images):
        raise DataError("manifest row count does not match pairs.idx")
    left = np.array([int(r["left_digit"]) for r in rows])
    right = np.array([int(r["right_digit"]) for r in rows])
    label = np.array([int(r["sum"]) for r in rows])
    split = np.array([r["split"] for r in rows], dtype="U5")
    supervised = np.array([r["supervised_flag"] == "1" for r in rows])
    digit_set = tuple(sorted(set(left) | set(right)))
    return PairDataset(images, left, right, label, split, supervised, digit_set)
