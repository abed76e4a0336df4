"""Analysis-by-synthesis: recover a line field from a target blur by Adam descent.

The objective is a Charbonnier-smoothed L1 between the rendered blur and the
target. Weights are parameterized through a softplus so fitted fields are
strictly nonnegative; deltas are clamped to the renderer's 32 px displacement
cap after every step. The returned field is the best-loss iterate seen,
including the initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, NumericalError
from .flow import FlowField, estimate_flow
from .imgcore import Image
from .linepred import MAX_DISPLACEMENT, LineField, render, render_forward_backward
from .metrics import psnr

INIT_ZEROS = "zeros"
INIT_FROM_FLOWS = "from_flows"

WEIGHTS_SOFTPLUS = "softplus"
WEIGHTS_UNIFORM = "uniform"

NORM_OFF = "off"
NORM_GLOBAL = "global"


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 500
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.998
    epsilon: float = 1e-8
    charbonnier_eps: float = 1e-3
    n_samples: int = 17
    init: str = INIT_ZEROS
    weight_mode: str = WEIGHTS_SOFTPLUS
    normalization: str = NORM_OFF

    def __post_init__(self):
        if self.iterations < 1:
            raise ArgumentError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_size <= 0:
            raise ArgumentError(f"step size must be > 0, got {self.step_size}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ArgumentError("adam betas must lie strictly in (0, 1)")
        if self.epsilon <= 0 or self.charbonnier_eps <= 0:
            raise ArgumentError("epsilon and charbonnier_eps must be > 0")
        if self.n_samples < 2:
            raise ArgumentError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.init not in (INIT_ZEROS, INIT_FROM_FLOWS):
            raise ArgumentError(f"unknown init mode {self.init!r}")
        if self.weight_mode not in (WEIGHTS_SOFTPLUS, WEIGHTS_UNIFORM):
            raise ArgumentError(f"unknown weight mode {self.weight_mode!r}")
        if self.normalization not in (NORM_OFF, NORM_GLOBAL):
            raise ArgumentError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class FitResult:
    field: LineField
    loss_trace: tuple[float, ...]
    psnr_trace: tuple[float, ...]
    final_loss: float
    final_psnr: float

    def trace_csv(self) -> str:
        lines = ["iter,loss,psnr"]
        for i, (loss, p) in enumerate(zip(self.loss_trace, self.psnr_trace)):
            lines.append(f"{i},{loss:.12g},{p:.6g}")
        return "\n".join(lines) + "\n"


def charbonnier(a: Image, b: Image, eps: float) -> float:
    """Smooth L1 surrogate: mean of sqrt(diff^2 + eps^2) - eps."""
    if a.shape != b.shape:
        raise ArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")
    if eps <= 0:
        raise ArgumentError(f"eps must be > 0, got {eps}")
    diff = a.data - b.data
    return float(np.mean(np.sqrt(diff * diff + eps * eps) - eps))


def _softplus(x: np.ndarray) -> np.ndarray:
    # stable softplus: log(1 + exp(x))
    return np.logaddexp(0.0, x)


def _softplus_inverse(y: np.ndarray) -> np.ndarray:
    y = np.maximum(y, 1e-12)
    # log(exp(y) - 1), stable for small and large y
    return y + np.log(-np.expm1(-y))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class _Adam:
    def __init__(self, shape, cfg: FitConfig):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.cfg = cfg

    def step(self, param: np.ndarray, grad: np.ndarray, t: int) -> np.ndarray:
        cfg = self.cfg
        self.m = cfg.beta1 * self.m + (1.0 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1.0 - cfg.beta2) * grad * grad
        m_hat = self.m / (1.0 - cfg.beta1**t)
        v_hat = self.v / (1.0 - cfg.beta2**t)
        return param - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def fit_line_field(
    i1: Image,
    i2: Image,
    target: Image,
    cfg: FitConfig = FitConfig(),
    init_flows: tuple[FlowField, FlowField] | None = None,
    init_field: LineField | None = None,
) -> FitResult:
    """Minimize the Charbonnier loss of render(i1, i2, field) against target.

    init_flows supplies (forward, backward) fields for the from_flows init
    mode (estimated internally when absent); init_field warm-starts from an
    existing field instead, overriding the init mode. Deterministic for fixed
    inputs and configuration.
    """
    if i1.shape != i2.shape or i1.shape != target.shape:
        raise ArgumentError(
            f"image shapes differ: {i1.shape}, {i2.shape}, {target.shape}"
        )
    h, w = i1.height, i1.width
    n = cfg.n_samples
    uniform_w = 1.0 / (2.0 * n)

    if init_field is not None:
        if (init_field.height, init_field.width, init_field.n_samples) != (h, w, n):
            raise ArgumentError("init_field does not match the image size or n_samples")
        d1 = init_field.delta1.copy()
        d2 = init_field.delta2.copy()
        logits1 = _softplus_inverse(init_field.weights1)
        logits2 = _softplus_inverse(init_field.weights2)
    elif cfg.init == INIT_FROM_FLOWS:
        if init_flows is None:
            init_flows = (estimate_flow(i1, i2), estimate_flow(i2, i1))
        fwd, bwd = init_flows
        if (fwd.height, fwd.width) != (h, w) or (bwd.height, bwd.width) != (h, w):
            raise ArgumentError("init flow dimensions do not match the images")
        d1 = fwd.vectors.copy()
        d2 = bwd.vectors.copy()
        logits1 = np.full((h, w, n), _softplus_inverse(np.float64(uniform_w)))
        logits2 = logits1.copy()
    else:
        d1 = np.zeros((h, w, 2))
        d2 = np.zeros((h, w, 2))
        logits1 = np.full((h, w, n), _softplus_inverse(np.float64(uniform_w)))
        logits2 = logits1.copy()
    np.clip(d1, -MAX_DISPLACEMENT, MAX_DISPLACEMENT, out=d1)
    np.clip(d2, -MAX_DISPLACEMENT, MAX_DISPLACEMENT, out=d2)

    def weights_of(logits1, logits2):
        if cfg.weight_mode == WEIGHTS_UNIFORM:
            w1 = np.full((h, w, n), uniform_w)
            return w1, w1.copy(), None
        w1 = _softplus(logits1)
        w2 = _softplus(logits2)
        if cfg.normalization == NORM_GLOBAL:
            total = w1.sum(axis=2) + w2.sum(axis=2)
            total = np.maximum(total, 1e-12)
            return w1 / total[:, :, np.newaxis], w2 / total[:, :, np.newaxis], total
        return w1, w2, None

    adam_d1 = _Adam(d1.shape, cfg)
    adam_d2 = _Adam(d2.shape, cfg)
    adam_l1 = _Adam(logits1.shape, cfg)
    adam_l2 = _Adam(logits2.shape, cfg)

    loss_trace = []
    psnr_trace = []
    best_loss = math.inf
    best = None
    n_elems = target.data.size
    eps = cfg.charbonnier_eps

    for it in range(cfg.iterations + 1):
        w1, w2, total = weights_of(logits1, logits2)
        lf = LineField(d1, d2, w1, w2)
        rendered, vjp = render_forward_backward(i1, i2, lf)
        loss = charbonnier(rendered, target, eps)
        if not math.isfinite(loss):
            raise NumericalError("loss became non-finite", iteration=it)
        loss_trace.append(loss)
        psnr_trace.append(psnr(rendered, target))
        if loss < best_loss:
            best_loss = loss
            best = lf
        if it == cfg.iterations:
            break

        diff = rendered.data - target.data
        upstream = Image(diff / (np.sqrt(diff * diff + eps * eps) * n_elems))
        g_d1, g_d2, g_w1, g_w2 = vjp(upstream)

        step = it + 1
        d1 = np.clip(adam_d1.step(d1, g_d1, step), -MAX_DISPLACEMENT, MAX_DISPLACEMENT)
        d2 = np.clip(adam_d2.step(d2, g_d2, step), -MAX_DISPLACEMENT, MAX_DISPLACEMENT)
        if cfg.weight_mode == WEIGHTS_SOFTPLUS:
            if cfg.normalization == NORM_GLOBAL:
                # backprop through w_i = s_i / total
                dot = (g_w1 * w1).sum(axis=2) + (g_w2 * w2).sum(axis=2)
                g_s1 = (g_w1 - dot[:, :, np.newaxis]) / total[:, :, np.newaxis]
                g_s2 = (g_w2 - dot[:, :, np.newaxis]) / total[:, :, np.newaxis]
            else:
                g_s1, g_s2 = g_w1, g_w2
            g_l1 = g_s1 * _sigmoid(logits1)
            g_l2 = g_s2 * _sigmoid(logits2)
            logits1 = adam_l1.step(logits1, g_l1, step)
            logits2 = adam_l2.step(logits2, g_l2, step)

    final_psnr = psnr(render(i1, i2, best), target)
    return FitResult(
        field=best,
        loss_trace=tuple(loss_trace),
        psnr_trace=tuple(psnr_trace),
        final_loss=best_loss,
        final_psnr=final_psnr,
    )
