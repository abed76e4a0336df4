"""Flow fields: pyramidal Lucas-Kanade estimation, warping, statistics, .flo I/O.

A flow field stores per-pixel displacements (u, v) meaning source pixel (x, y)
corresponds to (x + u, y + v) in the target frame. The estimator is a small
coarse-to-fine iterative least-squares scheme, good enough for the <= 16 px
motions the dataset rules admit; it makes no attempt to compete with modern
flow methods.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter, uniform_filter

from .errors import ArgumentError, FormatError
from .imgcore import Image, bilinear_gather, luma

FLO_MAGIC = np.float32(202021.25)

DEFAULT_LEVELS = 3
DEFAULT_RADIUS = 2
DEFAULT_ITERATIONS = 10

# Windows whose structure tensor has det/trace^2 below this are treated as
# rank-deficient (aperture problem) and left unchanged.
DEGENERATE_THRESHOLD = 1e-6

# Gaussian presmoothing applied to each pyramid level before differentiation.
PRESMOOTH_SIGMA = 1.0

# Per-iteration updates beyond the linearization range are untrustworthy.
UPDATE_CLAMP = 1.0


@dataclass(frozen=True)
class FlowField:
    """Immutable (H, W, 2) float64 displacement field."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ArgumentError(f"flow vectors must have shape (H, W, 2), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ArgumentError("flow field dimensions must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ArgumentError("flow field contains non-finite components")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.vectors[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[:, :, 1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    def negated(self) -> "FlowField":
        return FlowField(-self.vectors)


@dataclass(frozen=True)
class FlowStats:
    max_inf_norm: float
    fraction_at_least: float
    mean_endpoint_error: float | None = None


def _warp_gray(gray: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    xs = np.arange(w, dtype=np.float64)[np.newaxis, :]
    ys = np.arange(h, dtype=np.float64)[:, np.newaxis]
    warped = bilinear_gather(gray[:, :, np.newaxis], xs + u, ys + v)
    return warped[:, :, 0]


def _halve(gray: np.ndarray) -> np.ndarray:
    # crop to even dimensions, then 2x2 area average
    h, w = gray.shape
    g = gray[: h - h % 2, : w - w % 2]
    return g.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _lk_level(ga, gb, u, v, radius, iterations):
    """Iterative least-squares refinement of (u, v) at one pyramid level.

    Gradients and the windowed structure tensor come from the template ga and
    stay fixed across iterations (inverse-compositional style). After each
    update the field is median filtered, a standard outlier guard; degenerate
    windows are then restored so they keep their incoming estimate exactly.
    """
    size = 2 * radius + 1
    gx = np.gradient(ga, axis=1)
    gy = np.gradient(ga, axis=0)
    axx = uniform_filter(gx * gx, size, mode="nearest")
    axy = uniform_filter(gx * gy, size, mode="nearest")
    ayy = uniform_filter(gy * gy, size, mode="nearest")
    det = axx * ayy - axy * axy
    trace = axx + ayy
    ok = det > DEGENERATE_THRESHOLD * trace * trace
    safe_det = np.where(ok, det, 1.0)
    for _ in range(iterations):
        bw = _warp_gray(gb, u, v)
        err = bw - ga
        bx = uniform_filter(gx * err, size, mode="nearest")
        by = uniform_filter(gy * err, size, mode="nearest")
        du = np.clip(-(ayy * bx - axy * by) / safe_det, -UPDATE_CLAMP, UPDATE_CLAMP)
        dv = np.clip(-(axx * by - axy * bx) / safe_det, -UPDATE_CLAMP, UPDATE_CLAMP)
        u_new = median_filter(u + np.where(ok, du, 0.0), size=3, mode="nearest")
        v_new = median_filter(v + np.where(ok, dv, 0.0), size=3, mode="nearest")
        u_new[~ok] = u[~ok]
        v_new[~ok] = v[~ok]
        u, v = u_new, v_new
    return u, v


def estimate_flow(
    a: Image,
    b: Image,
    levels: int = DEFAULT_LEVELS,
    radius: int = DEFAULT_RADIUS,
    iterations: int = DEFAULT_ITERATIONS,
) -> FlowField:
    """Coarse-to-fine Lucas-Kanade flow from a to b.

    Deterministic for fixed inputs and parameters. Windows with a
    rank-deficient structure tensor keep the estimate propagated from the
    coarser level, so flat regions produce exactly zero flow.
    """
    if a.shape != b.shape:
        raise ArgumentError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if levels < 1 or radius < 1 or iterations < 1:
        raise ArgumentError("levels, radius, and iterations must all be >= 1")
    window = 2 * radius + 1
    min_dim = min(a.width, a.height)
    needed = (2 ** (levels - 1)) * window
    if min_dim < needed:
        raise ArgumentError(
            f"image min dimension {min_dim} too small for {levels} pyramid levels "
            f"with window {window} (needs >= {needed})"
        )
    pyr_a = [luma(a)]
    pyr_b = [luma(b)]
    for _ in range(levels - 1):
        pyr_a.append(_halve(pyr_a[-1]))
        pyr_b.append(_halve(pyr_b[-1]))
    pyr_a = [gaussian_filter(g, PRESMOOTH_SIGMA, mode="nearest") for g in pyr_a]
    pyr_b = [gaussian_filter(g, PRESMOOTH_SIGMA, mode="nearest") for g in pyr_b]

    h, w = pyr_a[-1].shape
    u = np.zeros((h, w))
    v = np.zeros((h, w))
    for level in range(levels - 1, -1, -1):
        ga, gb = pyr_a[level], pyr_b[level]
        if level != levels - 1:
            u = 2.0 * np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)
            v = 2.0 * np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)
            u = _pad_to(u, ga.shape)
            v = _pad_to(v, ga.shape)
        u, v = _lk_level(ga, gb, u, v, radius, iterations)
    return FlowField(np.stack([u, v], axis=-1))


def _pad_to(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # upsampled coarse grids can be one row/column short of the finer level
    pad_h = shape[0] - arr.shape[0]
    pad_w = shape[1] - arr.shape[1]
    if pad_h < 0 or pad_w < 0:
        return arr[: shape[0], : shape[1]]
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, pad_h), (0, pad_w)), mode="edge")
    return arr


def warp(img: Image, f: FlowField) -> Image:
    """Backward warp: output(x, y) = img(x + u, y + v), edge clamped."""
    if (f.height, f.width) != (img.height, img.width):
        raise ArgumentError(
            f"flow is {f.width}x{f.height} but image is {img.width}x{img.height}"
        )
    xs = np.arange(img.width, dtype=np.float64)[np.newaxis, :]
    ys = np.arange(img.height, dtype=np.float64)[:, np.newaxis]
    return Image(bilinear_gather(img.data, xs + f.u, ys + f.v))


def flow_stats(
    f: FlowField, magnitude_threshold: float, other: FlowField | None = None
) -> FlowStats:
    """Displacement statistics used by the dataset filter.

    max_inf_norm is the largest per-pixel max(|u|, |v|); fraction_at_least is
    the fraction of pixels whose inf-norm meets the threshold. When a second
    field is given, mean_endpoint_error is the mean Euclidean distance
    between the two fields' vectors.
    """
    inf_norms = np.abs(f.vectors).max(axis=2)
    stats_max = float(inf_norms.max())
    fraction = float(np.mean(inf_norms >= magnitude_threshold))
    epe = None
    if other is not None:
        if other.vectors.shape != f.vectors.shape:
            raise ArgumentError(
                f"flow shapes differ: {f.vectors.shape} vs {other.vectors.shape}"
            )
        epe = float(np.mean(np.linalg.norm(f.vectors - other.vectors, axis=2)))
    return FlowStats(max_inf_norm=stats_max, fraction_at_least=fraction, mean_endpoint_error=epe)


# ---------------------------------------------------------------------------
# Middlebury .flo I/O
# ---------------------------------------------------------------------------


def write_flo(path: str | os.PathLike, f: FlowField) -> None:
    """Write a little-endian Middlebury .flo file (float32 interleaved u, v)."""
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC.tobytes())
        fh.write(struct.pack("<ii", f.width, f.height))
        fh.write(f.vectors.astype("<f4").tobytes())


def read_flo(path: str | os.PathLike) -> FlowField:
    """Read a Middlebury .flo file; bit-exact inverse of write_flo."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12:
        raise FormatError("truncated header", offset=len(buf))
    magic = np.frombuffer(buf[:4], dtype="<f4")[0]
    if magic != FLO_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {float(FLO_MAGIC)}", offset=0)
    width, height = struct.unpack("<ii", buf[4:12])
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", offset=4)
    count = width * height * 2
    payload = buf[12 : 12 + 4 * count]
    if len(payload) < 4 * count:
        raise FormatError(
            f"truncated payload: expected {4 * count} bytes, got {len(payload)}",
            offset=12 + len(payload),
        )
    vectors = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(height, width, 2)
    return FlowField(vectors)
