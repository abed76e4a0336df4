"""Non-learned comparison methods: the naive mean and uniform-weight flow blur."""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .flow import FlowField
from .imgcore import Image
from .linepred import LineField, render

MODE_FORWARD = "forward"
MODE_NEGATIVE_BACKWARD = "negative_backward"

DEFAULT_SAMPLES = 17


def naive_average(i1: Image, i2: Image) -> Image:
    """Per-sample mean of the two inputs, the floor reference for comparisons."""
    if i1.shape != i2.shape:
        raise ArgumentError(f"image shapes differ: {i1.shape} vs {i2.shape}")
    return Image(0.5 * i1.data + 0.5 * i2.data)


def blur_from_flow(
    i1: Image,
    i2: Image,
    flow_fwd: FlowField,
    flow_bwd: FlowField,
    mode: str = MODE_NEGATIVE_BACKWARD,
    n: int = DEFAULT_SAMPLES,
) -> Image:
    """Uniform-weight line blur along flow-derived lines.

    forward mode takes each image's own outgoing flow as its line field;
    negative_backward swaps in the negated incoming flow, which tolerates
    flow-estimation errors better at motion boundaries. Both go through the
    shared line-field renderer so baselines and fitted models differ only in
    parameters.
    """
    if i1.shape != i2.shape:
        raise ArgumentError(f"image shapes differ: {i1.shape} vs {i2.shape}")
    if (flow_fwd.height, flow_fwd.width) != (i1.height, i1.width) or (
        flow_bwd.height,
        flow_bwd.width,
    ) != (i1.height, i1.width):
        raise ArgumentError("flow field dimensions do not match the images")
    if n < 2:
        raise ArgumentError(f"sample count must be >= 2, got {n}")
    if mode == MODE_FORWARD:
        delta1 = flow_fwd.vectors
        delta2 = flow_bwd.vectors
    elif mode == MODE_NEGATIVE_BACKWARD:
        delta1 = -flow_bwd.vectors
        delta2 = -flow_fwd.vectors
    else:
        raise ArgumentError(f"unknown mode {mode!r}")
    lf = LineField.uniform(i1.width, i1.height, n, delta1=np.asarray(delta1), delta2=np.asarray(delta2))
    return render(i1, i2, lf)
