"""Line-prediction rendering: per-pixel blur lines with per-sample weights.

Each output pixel (x, y) is a weighted sum, over both input images, of N
evenly spaced bilinear samples along a line from (x, y) to
(x + dx_i(x, y), y + dy_i(x, y)):

    out(x, y) = sum_i sum_n W_i(x, y, n) * I_i(x + t_n*dx_i, y + t_n*dy_i)

with t_n = n/(N-1). The operator is linear in the weights and piecewise
linear in the line endpoints, which makes its exact reverse-mode derivative
cheap to state in closed form (render_vjp). Each pixel's weighted sum can
also be flattened into a discrete convolution kernel (rasterize_kernel).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError
from .imgcore import Image, bilinear_gather, flat_take

LPF1_MAGIC = b"LPF1"

# The renderer is built for displacements up to this many pixels per component.
MAX_DISPLACEMENT = 32.0


@dataclass(frozen=True)
class LineField:
    """Per-pixel line endpoints and per-sample weights for both input images.

    delta1/delta2 have shape (H, W, 2) storing (dx, dy) in pixels;
    weights1/weights2 have shape (H, W, N). Raw fields may hold any finite
    values; nonnegative weights are only guaranteed for fitted fields.
    """

    delta1: np.ndarray
    delta2: np.ndarray
    weights1: np.ndarray
    weights2: np.ndarray

    def __post_init__(self):
        d1 = np.asarray(self.delta1, dtype=np.float64)
        d2 = np.asarray(self.delta2, dtype=np.float64)
        w1 = np.asarray(self.weights1, dtype=np.float64)
        w2 = np.asarray(self.weights2, dtype=np.float64)
        if d1.ndim != 3 or d1.shape[2] != 2:
            raise ArgumentError(f"delta1 must have shape (H, W, 2), got {d1.shape}")
        if d2.shape != d1.shape:
            raise ArgumentError(f"delta shapes differ: {d1.shape} vs {d2.shape}")
        h, w = d1.shape[:2]
        if w1.ndim != 3 or w1.shape[:2] != (h, w):
            raise ArgumentError(f"weights1 must have shape ({h}, {w}, N), got {w1.shape}")
        if w2.shape != w1.shape:
            raise ArgumentError(f"weight shapes differ: {w1.shape} vs {w2.shape}")
        if w1.shape[2] < 2:
            raise ArgumentError(f"n_samples must be >= 2, got {w1.shape[2]}")
        for name, arr in (("delta1", d1), ("delta2", d2), ("weights1", w1), ("weights2", w2)):
            if not np.all(np.isfinite(arr)):
                raise ArgumentError(f"{name} contains non-finite values")
        for name, arr in (("delta1", d1), ("delta2", d2), ("weights1", w1), ("weights2", w2)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def height(self) -> int:
        return self.delta1.shape[0]

    @property
    def width(self) -> int:
        return self.delta1.shape[1]

    @property
    def n_samples(self) -> int:
        return self.weights1.shape[2]

    @classmethod
    def zeros(cls, width: int, height: int, n_samples: int) -> "LineField":
        """All-zero deltas and weights."""
        return cls(
            np.zeros((height, width, 2)),
            np.zeros((height, width, 2)),
            np.zeros((height, width, n_samples)),
            np.zeros((height, width, n_samples)),
        )

    @classmethod
    def uniform(
        cls,
        width: int,
        height: int,
        n_samples: int,
        delta1: np.ndarray | None = None,
        delta2: np.ndarray | None = None,
    ) -> "LineField":
        """Uniform weights 1/(2N) with optional delta fields (defaults to zero)."""
        w = np.full((height, width, n_samples), 1.0 / (2.0 * n_samples))
        if delta1 is None:
            delta1 = np.zeros((height, width, 2))
        if delta2 is None:
            delta2 = np.zeros((height, width, 2))
        return cls(delta1, delta2, w.copy(), w.copy())


@dataclass(frozen=True)
class SamplingReport:
    max_displacement: float
    min_required_samples: int
    undersampled: bool


def _check_render_args(i1: Image, i2: Image, lf: LineField) -> None:
    if i1.shape != i2.shape:
        raise ArgumentError(f"input images differ in shape: {i1.shape} vs {i2.shape}")
    if (lf.height, lf.width) != (i1.height, i1.width):
        raise ArgumentError(
            f"line field is {lf.width}x{lf.height} but images are {i1.width}x{i1.height}"
        )


def _sample_positions(delta: np.ndarray, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (x, y) positions of all N samples at every pixel, shape (H, W, N)."""
    h, w = delta.shape[:2]
    t = np.arange(n_samples, dtype=np.float64) / (n_samples - 1)
    xs = np.arange(w, dtype=np.float64)[np.newaxis, :, np.newaxis]
    ys = np.arange(h, dtype=np.float64)[:, np.newaxis, np.newaxis]
    px = xs + t * delta[:, :, 0:1]
    py = ys + t * delta[:, :, 1:2]
    return px, py


class _DirectionCache:
    """Clamped bilinear corners for one image's sample positions.

    Holding the four corner gathers lets the forward value, the weight
    gradient, and both spatial derivatives share one (expensive) round of
    fancy indexing.
    """

    def __init__(self, data: np.ndarray, delta: np.ndarray, n_samples: int):
        h, w = data.shape[:2]
        self.h, self.w = h, w
        self.flat = data.reshape(-1, data.shape[-1])
        self.px, self.py = _sample_positions(delta, n_samples)
        x = np.clip(self.px, 0.0, w - 1.0)
        y = np.clip(self.py, 0.0, h - 1.0)
        self.x0 = np.floor(x).astype(np.intp)
        self.y0 = np.floor(y).astype(np.intp)
        x1 = np.minimum(self.x0 + 1, w - 1)
        y1 = np.minimum(self.y0 + 1, h - 1)
        self.fx = x - self.x0
        self.fy = y - self.y0
        self.i00 = self.y0 * w + self.x0
        self.i10 = self.y0 * w + x1
        self.i01 = y1 * w + self.x0
        i11 = y1 * w + x1
        self.v00 = flat_take(self.flat, self.i00)
        self.v10 = flat_take(self.flat, self.i10)
        self.v01 = flat_take(self.flat, self.i01)
        self.v11 = flat_take(self.flat, i11)

    def samples(self) -> np.ndarray:
        fx = self.fx[..., np.newaxis]
        fy = self.fy[..., np.newaxis]
        return (
            (1.0 - fx) * (1.0 - fy) * self.v00
            + fx * (1.0 - fy) * self.v10
            + (1.0 - fx) * fy * self.v01
            + fx * fy * self.v11
        )

    def spatial_grad(self, axis: str) -> np.ndarray:
        """d(sample)/d(position) with clamp zeroing and left-subcell lattice ties.

        Away from the lattice the derivative falls straight out of the cached
        corners; positions exactly on a lattice coordinate are re-gathered
        from the left (or upper) subcell, and positions outside the image get
        zero because the clamp makes the interpolant constant there.
        """
        if axis == "x":
            raw, frac, size = self.px, self.fx, self.w
            main0, back_step = self.x0, 1
            fo_full = self.fy
            d_lo = self.v10 - self.v00
            d_hi = self.v11 - self.v01
            i_lo, i_hi = self.i00, self.i01  # rows y0 and y1, column x0
        else:
            raw, frac, size = self.py, self.fy, self.h
            main0, back_step = self.y0, self.w
            fo_full = self.fx
            d_lo = self.v01 - self.v00
            d_hi = self.v11 - self.v10
            i_lo, i_hi = self.i00, self.i10  # columns x0 and x1, row y0
        grad = (fo_full[..., np.newaxis] * (d_hi - d_lo)) + d_lo

        inside = (raw >= 0.0) & (raw <= size - 1.0)
        grad *= inside[..., np.newaxis]
        lattice = inside & (frac == 0.0)
        if np.any(lattice):
            usable = lattice & (main0 >= 1)
            grad[lattice & ~usable] = 0.0
            if np.any(usable):
                idx = np.nonzero(usable)
                fo_m = fo_full[idx][:, np.newaxis]
                lo = flat_take(self.flat, i_lo[idx]) - flat_take(self.flat, i_lo[idx] - back_step)
                hi = flat_take(self.flat, i_hi[idx]) - flat_take(self.flat, i_hi[idx] - back_step)
                grad[idx] = (1.0 - fo_m) * lo + fo_m * hi
        return grad


def render(i1: Image, i2: Image, lf: LineField) -> Image:
    """Evaluate the line-prediction blur of an image pair."""
    _check_render_args(i1, i2, lf)
    out = np.zeros(i1.shape)
    for img, delta, weights in (
        (i1, lf.delta1, lf.weights1),
        (i2, lf.delta2, lf.weights2),
    ):
        px, py = _sample_positions(delta, lf.n_samples)
        samples = bilinear_gather(img.data, px, py)  # (H, W, N, C)
        out += (weights[..., np.newaxis] * samples).sum(axis=2)
    return Image(out)


def _direction_vjp(cache: _DirectionCache, weights: np.ndarray, t: np.ndarray, up: np.ndarray):
    """Per-direction gradients from a corner cache; up has shape (H, W, 1, C)."""
    samples = cache.samples()
    d_w = (up * samples).sum(axis=3)
    gx = cache.spatial_grad("x")
    gy = cache.spatial_grad("y")
    coeff = weights * t
    d_dx = (coeff * (up * gx).sum(axis=3)).sum(axis=2)
    d_dy = (coeff * (up * gy).sum(axis=3)).sum(axis=2)
    return np.stack([d_dx, d_dy], axis=-1), d_w


def render_vjp(
    i1: Image, i2: Image, lf: LineField, upstream: Image
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of <upstream, render(i1, i2, lf)> w.r.t. the field.

    Returns (d_delta1, d_delta2, d_weights1, d_weights2) with the same shapes
    as the corresponding LineField arrays. The weight gradient is the sampled
    image contracted with the upstream cotangent; the delta gradient chains
    the subcell spatial derivative of bilinear interpolation with the t_n
    line parameter.
    """
    _check_render_args(i1, i2, lf)
    if upstream.shape != i1.shape:
        raise ArgumentError(f"upstream shape {upstream.shape} != image shape {i1.shape}")
    n = lf.n_samples
    t = np.arange(n, dtype=np.float64) / (n - 1)
    up = upstream.data[:, :, np.newaxis, :]
    d_d1, d_w1 = _direction_vjp(_DirectionCache(i1.data, lf.delta1, n), lf.weights1, t, up)
    d_d2, d_w2 = _direction_vjp(_DirectionCache(i2.data, lf.delta2, n), lf.weights2, t, up)
    return d_d1, d_d2, d_w1, d_w2


def render_forward_backward(i1: Image, i2: Image, lf: LineField):
    """Render and return (output, vjp closure) sharing the gathered corners.

    The closure maps an upstream cotangent image to the same gradients as
    render_vjp; it exists so optimization loops pay for the corner gathers
    once per iteration instead of twice.
    """
    _check_render_args(i1, i2, lf)
    n = lf.n_samples
    t = np.arange(n, dtype=np.float64) / (n - 1)
    cache1 = _DirectionCache(i1.data, lf.delta1, n)
    cache2 = _DirectionCache(i2.data, lf.delta2, n)
    samples1 = cache1.samples()
    samples2 = cache2.samples()
    out = Image(
        (lf.weights1[..., np.newaxis] * samples1).sum(axis=2)
        + (lf.weights2[..., np.newaxis] * samples2).sum(axis=2)
    )

    def vjp(upstream: Image):
        up = upstream.data[:, :, np.newaxis, :]
        d_w1 = (up * samples1).sum(axis=3)
        d_w2 = (up * samples2).sum(axis=3)
        grads = []
        for cache, weights in ((cache1, lf.weights1), (cache2, lf.weights2)):
            gx = cache.spatial_grad("x")
            gy = cache.spatial_grad("y")
            coeff = weights * t
            d_dx = (coeff * (up * gx).sum(axis=3)).sum(axis=2)
            d_dy = (coeff * (up * gy).sum(axis=3)).sum(axis=2)
            grads.append(np.stack([d_dx, d_dy], axis=-1))
        return grads[0], grads[1], d_w1, d_w2

    return out, vjp


def rasterize_kernel(
    lf: LineField, x: int, y: int
) -> tuple[dict[tuple[int, int], float], dict[tuple[int, int], float]]:
    """Flatten one pixel's blur lines into two discrete convolution kernels.

    Each of the N samples per image splits its weight across the (up to) four
    bilinear taps at its clamped continuous position. Keys are integer offsets
    (ox, oy) relative to (x, y); zero taps are omitted. Applying kernel i to
    image i and summing both reproduces render at (x, y).
    """
    if not (0 <= x < lf.width and 0 <= y < lf.height):
        raise ArgumentError(f"pixel ({x}, {y}) outside {lf.width}x{lf.height} field")
    n = lf.n_samples
    t = np.arange(n, dtype=np.float64) / (n - 1)
    kernels = []
    for delta, weights in ((lf.delta1, lf.weights1), (lf.delta2, lf.weights2)):
        taps: dict[tuple[int, int], float] = {}
        dx, dy = delta[y, x]
        for k in range(n):
            sx = min(max(x + t[k] * dx, 0.0), lf.width - 1.0)
            sy = min(max(y + t[k] * dy, 0.0), lf.height - 1.0)
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            x1 = min(x0 + 1, lf.width - 1)
            y1 = min(y0 + 1, lf.height - 1)
            fx = sx - x0
            fy = sy - y0
            wgt = weights[y, x, k]
            for tx, ty, frac in (
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ):
                contribution = wgt * frac
                if contribution != 0.0:
                    key = (tx - x, ty - y)
                    taps[key] = taps.get(key, 0.0) + contribution
        kernels.append(taps)
    return kernels[0], kernels[1]


def apply_kernel(kernel: dict[tuple[int, int], float], img: Image, x: int, y: int) -> np.ndarray:
    """Inner product of a rasterized kernel with an image at (x, y), per channel."""
    out = np.zeros(img.channels)
    for (ox, oy), wgt in kernel.items():
        out += wgt * img.data[y + oy, x + ox]
    return out


def check_sampling(lf: LineField) -> SamplingReport:
    """Whether N samples suffice for the field's largest displacement.

    Bilinear prefiltering lets one sample cover two pixels of travel, so the
    rule is ceil(max_displacement / 2) + 1 samples; fields needing more than
    n_samples are temporally undersampled and will show gap artifacts.
    """
    max_disp = float(max(np.abs(lf.delta1).max(), np.abs(lf.delta2).max()))
    required = int(np.ceil(max_disp / 2.0)) + 1
    return SamplingReport(
        max_displacement=max_disp,
        min_required_samples=required,
        undersampled=lf.n_samples < required,
    )


# ---------------------------------------------------------------------------
# LPF1 binary serialization
# ---------------------------------------------------------------------------


def save_line_field(path: str | os.PathLike, lf: LineField) -> None:
    """Write the LPF1 binary format (float32 payload, little-endian header)."""
    with open(path, "wb") as f:
        f.write(LPF1_MAGIC)
        f.write(struct.pack("<III", lf.width, lf.height, lf.n_samples))
        for arr in (lf.delta1, lf.delta2, lf.weights1, lf.weights2):
            f.write(arr.astype("<f4").tobytes())


def load_line_field(path: str | os.PathLike) -> LineField:
    """Read an LPF1 file; inverse of save_line_field, bit-exact for f32 payloads."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != LPF1_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {LPF1_MAGIC!r}", offset=0)
    if len(buf) < 16:
        raise FormatError("truncated header", offset=len(buf))
    width, height, n = struct.unpack("<III", buf[4:16])
    if width < 1 or height < 1 or n < 2:
        raise FormatError(f"bad header fields width={width} height={height} n={n}", offset=4)
    counts = [height * width * 2, height * width * 2, height * width * n, height * width * n]
    arrays = []
    pos = 16
    for count in counts:
        nbytes = 4 * count
        chunk = buf[pos : pos + nbytes]
        if len(chunk) < nbytes:
            raise FormatError(
                f"truncated payload: expected {nbytes} bytes, got {len(chunk)}",
                offset=pos + len(chunk),
            )
        arrays.append(np.frombuffer(chunk, dtype="<f4").astype(np.float64))
        pos += nbytes
    d1 = arrays[0].reshape(height, width, 2)
    d2 = arrays[1].reshape(height, width, 2)
    w1 = arrays[2].reshape(height, width, n)
    w2 = arrays[3].reshape(height, width, n)
    return LineField(d1, d2, w1, w2)
