"""Kernel temporal segmentation: change-point detection by dynamic programming.

Partitions a feature sequence into contiguous homogeneous segments by
minimizing total within-segment scatter plus a BIC-style penalty on the
number of segments.  The default cost is the within-segment scatter
around the segment mean (equivalently the linear-kernel cost), answered
from prefix sums; an RBF-kernel cost over the Gram matrix is available
as an alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Shot:
    """A contiguous half-open frame range [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid shot [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


class SegmentCostTable:
    """Within-segment cost of any [a, b), answered in O(1) from prefix sums.

    kernel="linear": cost(a, b) = sum_{t in [a,b)} ||x_t - mean(x_{a:b})||^2.
    kernel="rbf":    same form on the implicit RBF feature map, computed
    from cumulative sums of the Gram matrix exp(-gamma ||x_s - x_t||^2)
    (O(N^2) memory, so only for modest N).
    """

    def __init__(self, x: np.ndarray, kernel: str = "linear", gamma: float | None = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("expected a nonempty (N, D) feature matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        self.n = x.shape[0]
        self.kernel = kernel
        if kernel == "linear":
            # prefix sums of x and of ||x||^2
            s1 = np.zeros((self.n + 1, x.shape[1]))
            np.cumsum(x, axis=0, out=s1[1:])
            self._s1 = s1
            self._sq = (s1 * s1).sum(axis=1)
            self._s2 = np.concatenate([[0.0], np.cumsum((x * x).sum(axis=1))])
        elif kernel == "rbf":
            if gamma is None:
                gamma = 1.0 / x.shape[1]
            sq = (x * x).sum(axis=1)
            d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
            np.maximum(d2, 0.0, out=d2)
            gram = np.exp(-gamma * d2)
            block = np.zeros((self.n + 1, self.n + 1))
            block[1:, 1:] = gram.cumsum(axis=0).cumsum(axis=1)
            self._diag = np.concatenate([[0.0], np.cumsum(np.diag(gram))])
            self._block = block
        else:
            raise ValueError(f"unknown kernel {kernel!r}")

    def cost(self, a: int, b: int) -> float:
        if not 0 <= a <= b <= self.n:
            raise ValueError(f"segment [{a}, {b}) out of range")
        if b - a <= 1:
            return 0.0
        return float(self.costs(np.array([a]), b)[0])

    def costs(self, starts: np.ndarray, end: int) -> np.ndarray:
        """Vectorized cost(s, end) for an array of segment starts."""
        lengths = end - starts
        if self.kernel == "linear":
            sq_sum = self._s2[end] - self._s2[starts]
            mean_term = (
                self._sq[end]
                + self._sq[starts]
                - 2.0 * (self._s1[starts] @ self._s1[end])
            )
            return sq_sum - mean_term / lengths
        blk = (
            self._block[end, end]
            - self._block[starts, end]
            - self._block[end, starts]
            + self._block[starts, starts]
        )
        return (self._diag[end] - self._diag[starts]) - blk / lengths


def segment_penalty(n_frames: int, n_segments: int, coeff: float) -> float:
    """BIC-style penalty coeff * m * (log(N / m) + 1) on m segments."""
    return coeff * n_segments * (math.log(n_frames / n_segments) + 1.0)


def kts_changepoints(
    x: np.ndarray,
    max_segments: int | None = None,
    penalty_coeff: float = 1.0,
    kernel: str = "linear",
    gamma: float | None = None,
) -> list[int]:
    """Penalized optimal change points of a feature sequence.

    Runs the exact segmentation DP for every segment count m up to
    ``max_segments`` (default: N/10 rounded up) and returns the interior
    boundaries of the m minimizing total cost + penalty; ties prefer
    fewer segments.  An empty list means the video is a single shot.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if max_segments is None:
        max_segments = math.ceil(n / 10)
    if max_segments < 1:
        raise ValueError("max_segments must be at least 1")
    kmax = min(max_segments, n)
    table = SegmentCostTable(x, kernel=kernel, gamma=gamma)

    # best[k][t]: minimal cost splitting frames [0, t) into exactly k segments
    best = np.full((kmax + 1, n + 1), np.inf)
    back = np.zeros((kmax + 1, n + 1), dtype=int)
    best[0, 0] = 0.0
    for k in range(1, kmax + 1):
        for t in range(k, n + 1):
            starts = np.arange(k - 1, t)
            cand = best[k - 1, starts] + table.costs(starts, t)
            j = int(np.argmin(cand))
            best[k, t] = cand[j]
            back[k, t] = starts[j]

    objective = [
        best[m, n] + segment_penalty(n, m, penalty_coeff)
        for m in range(1, kmax + 1)
    ]
    m_opt = 1 + int(np.argmin(objective))

    boundaries = []
    t = n
    for k in range(m_opt, 0, -1):
        t = int(back[k, t])
        if t > 0:
            boundaries.append(t)
    return sorted(boundaries)


def shots_from_changepoints(boundaries, n_frames: int) -> list[Shot]:
    """Contiguous shots covering [0, N) implied by interior boundaries."""
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    bounds = list(boundaries)
    if bounds != sorted(set(bounds)):
        raise ValueError("boundaries must be strictly increasing")
    if bounds and not (0 < bounds[0] and bounds[-1] < n_frames):
        raise ValueError("boundaries must lie strictly inside (0, N)")
    edges = [0] + bounds + [n_frames]
    return [Shot(a, b) for a, b in zip(edges[:-1], edges[1:])]
