"""Image container, bilinear interpolation, gradients, resampling, and PNM/PFM I/O.

Images are float64 rasters of shape (height, width, channels) with samples
nominally in [0, 1]. All boundary handling is clamp-to-edge; values are treated
as linear (no gamma).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError

# Rec. 601 luma weights, used wherever a single-channel view of RGB is needed.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass(frozen=True)
class Image:
    """Immutable H x W x C float64 raster, C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ArgumentError(f"image data must be 2-D or 3-D, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ArgumentError(f"image dimensions must be >= 1, got {w}x{h}")
        if c not in (1, 3):
            raise ArgumentError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ArgumentError("image contains non-finite samples")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def luma(img: Image) -> np.ndarray:
    """H x W single-channel view: Rec. 601 for RGB, the channel itself for gray."""
    if img.channels == 1:
        return img.data[:, :, 0]
    return img.data @ LUMA_WEIGHTS


def flat_take(data_flat: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gather rows of a flattened (H*W, C) array; idx of shape S gives S + (C,)."""
    return data_flat.take(idx.ravel(), axis=0).reshape(idx.shape + (data_flat.shape[-1],))


def bilinear_gather(data: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) array at continuous positions with clamp-to-edge.

    px and py may have any common shape S; the result has shape S + (C,).
    """
    h, w = data.shape[:2]
    x = np.clip(px, 0.0, w - 1.0)
    y = np.clip(py, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., np.newaxis]
    fy = (y - y0)[..., np.newaxis]
    flat = data.reshape(-1, data.shape[-1])
    base = y0 * w
    v00 = flat_take(flat, base + x0)
    v10 = flat_take(flat, base + x1)
    v01 = flat_take(flat, y1 * w + x0)
    v11 = flat_take(flat, y1 * w + x1)
    return (
        (1.0 - fx) * (1.0 - fy) * v00
        + fx * (1.0 - fy) * v10
        + (1.0 - fx) * fy * v01
        + fx * fy * v11
    )


def bilinear_sample(img: Image, x: float, y: float, c: int = 0) -> float:
    """Bilinear interpolation of one channel at a continuous coordinate.

    Coordinates outside [0, width-1] x [0, height-1] are clamped to the edge
    before interpolating, so the function is defined for all finite (x, y).
    """
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ArgumentError("sample coordinates must be finite")
    if not 0 <= c < img.channels:
        raise ArgumentError(f"channel index {c} out of range for {img.channels} channels")
    value = bilinear_gather(img.data[:, :, c : c + 1], np.float64(x), np.float64(y))
    return float(value[0])


def sobel_mean_gradient(img: Image) -> float:
    """Mean Sobel gradient magnitude of the luma scaled to [0, 255].

    Uses the 3x3 kernels with edge-clamped borders; the mean runs over all
    pixels including borders.
    """
    if img.width < 3 or img.height < 3:
        raise ArgumentError("sobel_mean_gradient requires at least a 3x3 image")
    gray = luma(img) * 255.0
    padded = np.pad(gray, 1, mode="edge")
    gx = np.zeros_like(gray)
    gy = np.zeros_like(gray)
    h, w = gray.shape
    for dy in range(3):
        for dx in range(3):
            window = padded[dy : dy + h, dx : dx + w]
            gx += SOBEL_X[dy, dx] * window
            gy += SOBEL_Y[dy, dx] * window
    return float(np.mean(np.hypot(gx, gy)))


def downsample(img: Image, factor: int) -> Image:
    """Area-average downsample; both dimensions must be divisible by factor."""
    if not isinstance(factor, (int, np.integer)) or factor < 2:
        raise ArgumentError(f"downsample factor must be an integer >= 2, got {factor!r}")
    h, w, c = img.shape
    if h % factor or w % factor:
        raise ArgumentError(f"dimensions {w}x{h} not divisible by factor {factor}")
    blocks = img.data.reshape(h // factor, factor, w // factor, factor, c)
    return Image(blocks.mean(axis=(1, 3)))


# ---------------------------------------------------------------------------
# PNM (P5/P6, maxval 255) and PFM (little-endian float32) I/O
# ---------------------------------------------------------------------------


def _read_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-separated token, skipping '#' comments. Returns (token, new pos)."""
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("unexpected end of header", offset=pos)
    start = pos
    while pos < n and buf[pos : pos + 1] not in b" \t\r\n":
        pos += 1
    return buf[start:pos], pos


def read_pnm(path: str | os.PathLike) -> Image:
    """Read a binary P5 (gray) or P6 (RGB) file with maxval 255."""
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _read_pnm_token(buf, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FormatError(f"unsupported PNM magic {magic!r}", offset=0)
    fields = []
    for _ in range(3):
        token, pos = _read_pnm_token(buf, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise FormatError(f"non-numeric header field {token!r}", offset=pos - len(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}", offset=0)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    # exactly one whitespace byte separates the header from the payload
    pos += 1
    expected = width * height * channels
    payload = buf[pos : pos + expected]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}",
            offset=pos + len(payload),
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr.astype(np.float64) / 255.0)


def write_pnm(path: str | os.PathLike, img: Image) -> None:
    """Write P5 for single-channel images, P6 for RGB; values quantized to 8 bits."""
    magic = b"P5" if img.channels == 1 else b"P6"
    quantized = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
        f.write(quantized.tobytes())


def read_pfm(path: str | os.PathLike) -> Image:
    """Read a PFM file ("Pf" gray / "PF" color, rows stored bottom-to-top)."""
    with open(path, "rb") as f:
        buf = f.read()

    def read_line(pos):
        end = buf.find(b"\n", pos)
        if end < 0:
            raise FormatError("unexpected end of header", offset=len(buf))
        return buf[pos:end], end + 1

    magic, pos = read_line(0)
    magic = magic.strip()
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise FormatError(f"unsupported PFM magic {magic!r}", offset=0)
    dims, pos = read_line(pos)
    parts = dims.split()
    if len(parts) != 2:
        raise FormatError(f"bad dimension line {dims!r}", offset=pos - len(dims) - 1)
    try:
        width, height = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"bad dimension line {dims!r}", offset=pos - len(dims) - 1)
    scale_line, pos = read_line(pos)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"bad scale line {scale_line!r}", offset=pos - len(scale_line) - 1)
    if scale == 0.0:
        raise FormatError("scale must be nonzero", offset=pos - len(scale_line) - 1)
    endian = "<" if scale < 0 else ">"
    count = width * height * channels
    payload = buf[pos : pos + 4 * count]
    if len(payload) < 4 * count:
        raise FormatError(
            f"truncated payload: expected {4 * count} bytes, got {len(payload)}",
            offset=pos + len(payload),
        )
    arr = np.frombuffer(payload, dtype=endian + "f4").reshape(height, width, channels)
    return Image(arr[::-1].astype(np.float64))


def write_pfm(path: str | os.PathLike, img: Image) -> None:
    """Write little-endian PFM (scale -1.0); lossless for float32 sample values."""
    magic = b"Pf" if img.channels == 1 else b"PF"
    rows_bottom_up = img.data[::-1].astype("<f4")
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n-1.0\n" % (img.width, img.height))
        f.write(rows_bottom_up.tobytes())


_PNM_EXTENSIONS = {".pgm", ".ppm", ".pnm"}


def read_image(path: str | os.PathLike) -> Image:
    """Read PNM or PFM, dispatching on the file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext in _PNM_EXTENSIONS:
        return read_pnm(path)
    if ext == ".pfm":
        return read_pfm(path)
    raise ArgumentError(f"unsupported image extension {ext!r} (expected .pgm/.ppm/.pnm/.pfm)")


def write_image(path: str | os.PathLike, img: Image) -> None:
    """Write PNM or PFM, dispatching on the file extension."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext in _PNM_EXTENSIONS:
        write_pnm(path, img)
    elif ext == ".pfm":
        write_pfm(path, img)
    else:
        raise ArgumentError(f"unsupported image extension {ext!r} (expected .pgm/.ppm/.pnm/.pfm)")
