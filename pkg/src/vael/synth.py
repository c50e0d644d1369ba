"""Deterministic synthetic digit glyphs for self-contained runs.

Renders seven-segment style digits on 28x28 canvases with per-image jitter
(translation, stroke width, intensity, pixel noise) so the classes are
crisply separable yet carry enough appearance variation for a generative
model to absorb.  Useful wherever a real handwritten-digit corpus is not on
disk; the images flow through the ordinary IDX pipeline.
"""
from __future__ import annotations

import numpy as np

_SEGMENTS = {
    "0": "abcdef",
    "1": "bc",
    "2": "abged",
    "3": "abgcd",
    "4": "fgbc",
    "5": "afgcd",
    "6": "afgedc",
    "7": "abc",
    "8": "abcdefg",
    "9": "abcdfg",
}


def _draw_segments(canvas, digit, top, left, t):
    bottom, right = top + 18, left + 12
    mid = (top + bottom) // 2
    boxes = {
        "a": (top, top + t, left, right),
        "b": (top, mid, right - t, right),
        "c": (mid, bottom, right - t, right),
        "d": (bottom - t, bottom, left, right),
        "e": (mid, bottom, left, left + t),
        "f": (top, mid, left, left + t),
        "g": (mid - t // 2, mid - t // 2 + t, left, right),
    }
    for seg in _SEGMENTS[str(digit)]:
        r0, r1, c0, c1 = boxes[seg]
        canvas[r0:r1, c0:c1] = 1.0


def render_digit(digit: int, rng: np.random.Generator, size: int = 28) -> np.ndarray:
    """One jittered glyph in [0, 1]^{size x size}."""
    canvas = np.zeros((size, size))
    dy = int(rng.integers(-2, 3))
    dx = int(rng.integers(-2, 3))
    t = int(rng.integers(2, 4))
    _draw_segments(canvas, digit, 5 + dy, 8 + dx, t)
    canvas *= rng.uniform(0.75, 1.0)
    canvas += rng.normal(0.0, 0.05, size=canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def make_source(count: int, digit_set=range(10), seed: int = 0):
    """(images (count, 28, 28), labels (count,)) with labels uniform over the set."""
    digit_set = tuple(sorted(digit_set))
    rng = np.random.default_rng(seed)
    labels = np.array([digit_set[i] for i in rng.integers(0, len(digit_set), size=count)])
    images = np.stack([render_digit(d, rng) for d in labels])
    return images, labels


def write_source_idx(directory, count, digit_set=range(10), seed: int = 0):
    """Render a source corpus and persist it as images.idx / labels.idx."""
    from pathlib import Path

    from .data import write_idx_images, write_idx_labels

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images, labels = make_source(count, digit_set, seed)
    write_idx_images(directory / "images.idx", images)
    write_idx_labels(directory / "labels.idx", labels)
    return directory / "images.idx", directory / "labels.idx"
