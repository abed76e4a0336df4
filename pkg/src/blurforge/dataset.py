"""Ground-truth blur by frame averaging, triplet filtering, and synthetic scenes.

The scene generator renders a textured sprite translating over a textured
background with subpixel bilinear splatting and returns the exact per-step
flows, so every downstream comparison (flow blur, fitting, filtering) has a
constructed oracle instead of an estimated one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ArgumentError
from .flow import FlowField, estimate_flow, flow_stats, warp
from .imgcore import Image, sobel_mean_gradient

MAX_TOTAL_DISPLACEMENT = 32.0

SPRITE_SHAPES = ("square", "disk")

# A pixel belongs to the sprite when the splatted coverage exceeds this.
SUPPORT_THRESHOLD = 0.5


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames of identical shape; at least two."""

    frames: tuple[Image, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ArgumentError(f"a frame sequence needs >= 2 frames, got {len(frames)}")
        shape = frames[0].shape
        for i, frame in enumerate(frames):
            if frame.shape != shape:
                raise ArgumentError(
                    f"frame {i} has shape {frame.shape}, expected {shape}"
                )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def frame_count(self) -> int:
        return len(self.frames)


def average_frames(seq) -> Image:
    """Per-pixel arithmetic mean of all frames (the ground-truth blur)."""
    frames = list(seq)
    if not frames:
        raise ArgumentError("cannot average an empty sequence")
    stacked = np.stack([f.data for f in frames])
    return Image(stacked.mean(axis=0))


@dataclass(frozen=True)
class UndersamplingReport:
    max_step: float
    undersampled: bool


def undersampling_check(seq, per_frame_flows=None) -> UndersamplingReport:
    """Detect temporal undersampling: any inter-frame step above one pixel.

    Flows may be supplied (one per consecutive pair); otherwise they are
    estimated, which requires frames large enough for the flow pyramid.
    """
    frames = list(seq)
    if per_frame_flows is not None:
        flows = list(per_frame_flows)
        if len(flows) != len(frames) - 1:
            raise ArgumentError(
                f"expected {len(frames) - 1} flows for {len(frames)} frames, got {len(flows)}"
            )
    else:
        flows = [estimate_flow(frames[i], frames[i + 1]) for i in range(len(frames) - 1)]
    max_step = max(flow_stats(f, 0.0).max_inf_norm for f in flows)
    return UndersamplingReport(max_step=max_step, undersampled=max_step > 1.0)


# ---------------------------------------------------------------------------
# Triplet filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterThresholds:
    """Accept/reject bounds; boundary values accept."""

    min_gradient: float = 13.0
    min_flow_fraction: float = 0.10
    flow_fraction_magnitude: float = 8.0
    max_flow: float = 16.0
    max_warp_l1: float = 13.0
    max_disagreement: float = 0.8


@dataclass(frozen=True)
class TripletFlows:
    """Flows used by the filter: f1->f2, f2->f3, and f2->f1."""

    fwd_12: FlowField
    fwd_23: FlowField
    bwd_21: FlowField


@dataclass(frozen=True)
class CriterionCheck:
    criterion: int
    statistic: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class FilterReport:
    checks: tuple[CriterionCheck, ...]
    overall_accept: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "overall_accept", all(c.passed for c in self.checks))

    def check(self, criterion: int) -> CriterionCheck:
        for c in self.checks:
            if c.criterion == criterion:
                return c
        raise ArgumentError(f"no criterion {criterion} in report")

    def to_record(self, triplet_id: str) -> str:
        """Line-oriented record for pipeline grepping."""
        parts = [triplet_id]
        for c in self.checks:
            parts.append(f"c{c.criterion}={c.statistic:.6g}")
        parts.append(f"accept={int(self.overall_accept)}")
        return " ".join(parts)


def filter_triplet(
    f1: Image,
    f2: Image,
    f3: Image,
    thresholds: FilterThresholds = FilterThresholds(),
    flows: TripletFlows | None = None,
) -> FilterReport:
    """Apply the five curation criteria to three consecutive frames.

    1. High-frequency content: every frame's mean Sobel gradient (0..255
       scale) at least min_gradient; the reported statistic is the minimum.
    2. Sufficient motion: in both adjacent-pair flows, the fraction of pixels
       with inf-norm >= flow_fraction_magnitude is at least min_flow_fraction;
       statistic is the smaller fraction.
    3. Limited motion: no flow vector in either pair exceeds max_flow
       (inf-norm); statistic is the larger maximum.
    4. No abrupt changes: warping each later frame onto the earlier one with
       that pair's flow leaves a mean L1 distance (0..255 scale) of at most
       max_warp_l1; statistic is the larger distance.
    5. Approximately linear motion: the f2->f3 flow and the negated f2->f1
       flow disagree by at most max_disagreement pixels on average (Euclidean
       norm per pixel).

    Flows are estimated when not supplied.
    """
    if f1.shape != f2.shape or f2.shape != f3.shape:
        raise ArgumentError(
            f"triplet shapes differ: {f1.shape}, {f2.shape}, {f3.shape}"
        )
    if flows is None:
        flows = TripletFlows(
            fwd_12=estimate_flow(f1, f2),
            fwd_23=estimate_flow(f2, f3),
            bwd_21=estimate_flow(f2, f1),
        )

    t = thresholds
    grad_stat = min(sobel_mean_gradient(f) for f in (f1, f2, f3))

    s12 = flow_stats(flows.fwd_12, t.flow_fraction_magnitude)
    s23 = flow_stats(flows.fwd_23, t.flow_fraction_magnitude)
    fraction_stat = min(s12.fraction_at_least, s23.fraction_at_least)
    max_flow_stat = max(s12.max_inf_norm, s23.max_inf_norm)

    warp_21 = warp(f2, flows.fwd_12)
    warp_32 = warp(f3, flows.fwd_23)
    l1_a = float(np.mean(np.abs(warp_21.data - f1.data))) * 255.0
    l1_b = float(np.mean(np.abs(warp_32.data - f2.data))) * 255.0
    warp_stat = max(l1_a, l1_b)

    disagreement = flow_stats(
        flows.fwd_23, 0.0, other=flows.bwd_21.negated()
    ).mean_endpoint_error

    checks = (
        CriterionCheck(1, grad_stat, t.min_gradient, grad_stat >= t.min_gradient),
        CriterionCheck(2, fraction_stat, t.min_flow_fraction, fraction_stat >= t.min_flow_fraction),
        CriterionCheck(3, max_flow_stat, t.max_flow, max_flow_stat <= t.max_flow),
        CriterionCheck(4, warp_stat, t.max_warp_l1, warp_stat <= t.max_warp_l1),
        CriterionCheck(5, disagreement, t.max_disagreement, disagreement <= t.max_disagreement),
    )
    return FilterReport(checks)


# ---------------------------------------------------------------------------
# Synthetic scene generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    """A textured sprite translating at constant velocity over a textured background."""

    width: int = 64
    height: int = 64
    frame_count: int = 3
    velocity: tuple[float, float] = (8.0, 0.0)
    sprite_size: int = 24
    sprite_shape: str = "square"
    background_seed: int = 1
    sprite_seed: int = 2
    channels: int = 3

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ArgumentError("scene dimensions must be >= 1")
        if self.frame_count < 2:
            raise ArgumentError(f"frame_count must be >= 2, got {self.frame_count}")
        if self.sprite_size < 1:
            raise ArgumentError(f"sprite_size must be >= 1, got {self.sprite_size}")
        if self.sprite_shape not in SPRITE_SHAPES:
            raise ArgumentError(f"sprite_shape must be one of {SPRITE_SHAPES}")
        if self.channels not in (1, 3):
            raise ArgumentError("channels must be 1 or 3")
        total = np.asarray(self.velocity, dtype=np.float64) * (self.frame_count - 1)
        if np.abs(total).max() > MAX_TOTAL_DISPLACEMENT:
            raise ArgumentError(
                f"total displacement {tuple(total)} exceeds the "
                f"{MAX_TOTAL_DISPLACEMENT:g} px cap"
            )


@dataclass(frozen=True)
class GeneratedScene:
    sequence: FrameSequence
    exact_flows: tuple[FlowField, ...]


def noise_texture(
    seed: int,
    height: int,
    width: int,
    channels: int = 3,
    lo: float = 0.0,
    hi: float = 1.0,
    smooth: int = 0,
) -> np.ndarray:
    """Deterministic uniform noise in [lo, hi], optionally box-smoothed."""
    rng = np.random.default_rng(seed)
    tex = rng.random((height, width, channels))
    for _ in range(smooth):
        tex = uniform_filter(tex, size=(3, 3, 1), mode="nearest")
    tex = tex - tex.min()
    peak = tex.max()
    if peak > 0:
        tex = tex / peak
    return lo + (hi - lo) * tex


def sprite_alpha(size: int, shape: str) -> np.ndarray:
    """Binary coverage mask: full square or inscribed disk."""
    if shape == "square":
        return np.ones((size, size))
    if shape == "disk":
        coords = np.arange(size) - (size - 1) / 2.0
        dist2 = coords[:, np.newaxis] ** 2 + coords[np.newaxis, :] ** 2
        return (dist2 <= (size / 2.0) ** 2).astype(np.float64)
    raise ArgumentError(f"sprite_shape must be one of {SPRITE_SHAPES}")


def _splat(values: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """Spread an array over a one-pixel-larger grid with bilinear weights."""
    s0, s1 = values.shape[:2]
    out_shape = (s0 + 1, s1 + 1) + values.shape[2:]
    out = np.zeros(out_shape)
    out[:s0, :s1] += (1.0 - fx) * (1.0 - fy) * values
    out[:s0, 1:] += fx * (1.0 - fy) * values
    out[1:, :s1] += (1.0 - fx) * fy * values
    out[1:, 1:] += fx * fy * values
    return out


def _splat_footprint(alpha: np.ndarray, position: tuple[float, float], canvas: tuple[int, int]):
    """Splatted coverage plus the integer placement window; checks bounds."""
    w, h = canvas
    size = alpha.shape[0]
    px, py = float(position[0]), float(position[1])
    ix, iy = int(np.floor(px)), int(np.floor(py))
    fx, fy = px - ix, py - iy
    cov = _splat(alpha, fx, fy)
    ww = size if fx == 0.0 else size + 1
    hh = size if fy == 0.0 else size + 1
    cov = cov[:hh, :ww]
    if ix < 0 or iy < 0 or ix + ww > w or iy + hh > h:
        raise ArgumentError(
            f"sprite at ({px:g}, {py:g}) leaves the {w}x{h} canvas"
        )
    return cov, ix, iy, fx, fy


def composite_sprite(
    background: Image,
    texture: np.ndarray,
    alpha: np.ndarray,
    position: tuple[float, float],
) -> Image:
    """Place a textured sprite at a continuous position by bilinear splatting.

    Color is premultiplied by coverage before splatting so integer positions
    reproduce a plain copy exactly.
    """
    if texture.shape[:2] != alpha.shape:
        raise ArgumentError(
            f"texture {texture.shape[:2]} and alpha {alpha.shape} sizes differ"
        )
    if texture.shape[2] != background.channels:
        raise ArgumentError("texture channel count does not match the background")
    cov, ix, iy, fx, fy = _splat_footprint(
        alpha, position, (background.width, background.height)
    )
    hh, ww = cov.shape
    premult = _splat(texture * alpha[:, :, np.newaxis], fx, fy)[:hh, :ww]
    out = background.data.copy()
    region = out[iy : iy + hh, ix : ix + ww]
    out[iy : iy + hh, ix : ix + ww] = region * (1.0 - cov[:, :, np.newaxis]) + premult
    return Image(out)


def sprite_flow_field(
    width: int,
    height: int,
    alpha: np.ndarray,
    position: tuple[float, float],
    velocity: tuple[float, float],
) -> FlowField:
    """Exact flow for a sprite step: the velocity on the sprite's support, zero elsewhere."""
    cov, ix, iy, _, _ = _splat_footprint(alpha, position, (width, height))
    support = np.zeros((height, width), dtype=bool)
    support[iy : iy + cov.shape[0], ix : ix + cov.shape[1]] = cov > SUPPORT_THRESHOLD
    vectors = np.zeros((height, width, 2))
    vectors[support] = np.asarray(velocity, dtype=np.float64)
    return FlowField(vectors)


def gen_scene(spec: SceneSpec, substeps: int = 1) -> GeneratedScene:
    """Render the scene and its exact flows.

    substeps densifies time: each unit velocity step is subdivided, yielding
    (frame_count-1)*substeps + 1 frames at positions p0 + (k/substeps)*velocity
    and one exact flow (velocity/substeps on the moving support) per
    consecutive frame pair. frame_count=3 with substeps=16 gives the
    33-frame sequences whose mean serves as ground truth.
    """
    if substeps < 1:
        raise ArgumentError(f"substeps must be >= 1, got {substeps}")
    w, h = spec.width, spec.height
    background = Image(noise_texture(spec.background_seed, h, w, spec.channels))
    texture = noise_texture(spec.sprite_seed, spec.sprite_size, spec.sprite_size, spec.channels)
    alpha = sprite_alpha(spec.sprite_size, spec.sprite_shape)

    velocity = np.asarray(spec.velocity, dtype=np.float64)
    total = velocity * (spec.frame_count - 1)
    start = np.floor(
        [(w - spec.sprite_size) / 2.0 - total[0] / 2.0, (h - spec.sprite_size) / 2.0 - total[1] / 2.0]
    )
    step = velocity / substeps
    count = (spec.frame_count - 1) * substeps + 1

    frames = []
    flows = []
    for k in range(count):
        pos = (start[0] + k * step[0], start[1] + k * step[1])
        frames.append(composite_sprite(background, texture, alpha, pos))
        if k < count - 1:
            flows.append(sprite_flow_field(w, h, alpha, pos, tuple(step)))
    return GeneratedScene(sequence=FrameSequence(tuple(frames)), exact_flows=tuple(flows))


def span_flows(spec: SceneSpec) -> tuple[FlowField, FlowField]:
    """Exact whole-span flows (first frame -> last frame, and last -> first)."""
    velocity = np.asarray(spec.velocity, dtype=np.float64)
    total = velocity * (spec.frame_count - 1)
    alpha = sprite_alpha(spec.sprite_size, spec.sprite_shape)
    start = np.floor(
        [
            (spec.width - spec.sprite_size) / 2.0 - total[0] / 2.0,
            (spec.height - spec.sprite_size) / 2.0 - total[1] / 2.0,
        ]
    )
    end = start + total
    fwd = sprite_flow_field(spec.width, spec.height, alpha, tuple(start), tuple(total))
    bwd = sprite_flow_field(spec.width, spec.height, alpha, tuple(end), tuple(-total))
    return fwd, bwd
