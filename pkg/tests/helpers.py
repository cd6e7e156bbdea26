"""Shared synthetic-trace builders for the test suite."""

import numpy as np

from bregman_skm import Trace


def make_trace(alpha, bregman=None, avg=None):
    """Synthetic trace with engine column semantics (test-side oracle)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    m = alpha.size
    bregman = np.zeros(m) if bregman is None else np.asarray(bregman, dtype=np.float64)
    step = np.concatenate([[0.0], np.cumsum(alpha[:-1])])
    if avg is None:
        w = np.cumsum(alpha[:-1] * bregman[:-1])
        avg = np.concatenate([[0.0], w / np.maximum(step[1:], 1e-300)])
    return Trace(
        n=np.arange(m, dtype=np.int64),
        alpha=alpha,
        bregman_residual=bregman,
        norm_residual=np.sqrt(np.maximum(bregman, 0.0)),
        step_sum=step,
        avg_residual=np.asarray(avg, dtype=np.float64),
        dist_to_ref=np.full(m, np.nan),
        clamp_count=np.zeros(m, dtype=np.int64),
        final_point=np.zeros(1),
        metadata={},
    )


def rate_trace(s, c, m=1000):
    """Trace whose averaged residual follows c * A_n**(-s) exactly."""
    alpha = 1.0 / (np.arange(m) + 10.0)
    tr = make_trace(alpha)
    avg = np.zeros(m)
    avg[1:] = c * tr.step_sum[1:] ** (-s)
    tr.avg_residual = avg
    return tr
