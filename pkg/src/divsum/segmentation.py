"""Shot segmentation, budgeted shot selection, and summary assembly.

Segmentation is change-point detection: minimize within-segment scatter
of the linear-kernel Gram matrix by dynamic programming, then pick the
segment count with a penalized model-selection criterion. Selection is an
exact 0/1 knapsack over shots: maximize summed shot scores subject to the
summary length budget. The same mechanics binarize annotated frame scores
into per-frame 0/1 training labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ContractError, Matrix, ShapeError
from .model import ModelParams, forward_scores

# Relative floor for the segment-count penalty scale. Keeps the criterion
# strictly monotone in the segment count when the data is exactly
# piecewise constant and the residual scatter is only float fuzz.
_PENALTY_FLOOR = 1e-9


@dataclass(frozen=True)
class ShotPartition:
    """Shots tiling [0, T): start indices (first is 0) and lengths."""

    change_points: np.ndarray
    shot_lengths: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.change_points, dtype=int)
        lengths = np.asarray(self.shot_lengths, dtype=int)
        object.__setattr__(self, "change_points", starts)
        object.__setattr__(self, "shot_lengths", lengths)
        if starts.ndim != 1 or lengths.ndim != 1 or starts.size != lengths.size:
            raise ShapeError("change points and lengths must be 1-D and parallel")
        if starts.size == 0:
            raise ContractError("a partition needs at least one shot")
        if starts[0] != 0:
            raise ContractError(f"first shot must start at frame 0, got {starts[0]}")
        if np.any(lengths < 1):
            raise ContractError("every shot needs at least one frame")
        expected = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        if not np.array_equal(starts, expected):
            raise ContractError("shots must tile the frame range without gaps or overlap")

    @classmethod
    def from_change_points(cls, starts, total_frames: int) -> "ShotPartition":
        starts = np.asarray(starts, dtype=int)
        if starts.size == 0 or starts[0] != 0:
            raise ContractError("change points must begin with frame 0")
        if np.any(np.diff(starts) < 1) or starts[-1] >= total_frames:
            raise ContractError("change points must increase strictly within the video")
        bounds = np.concatenate([starts, [total_frames]])
        return cls(change_points=starts, shot_lengths=np.diff(bounds))

    @property
    def total_frames(self) -> int:
        return int(self.shot_lengths.sum())

    @property
    def num_shots(self) -> int:
        return len(self.shot_lengths)

    def frame_ranges(self):
        for start, length in zip(self.change_points, self.shot_lengths):
            yield int(start), int(start + length)


@dataclass
class SummaryMask:
    """Per-frame 0/1 selections, constant within each shot."""

    frame_mask: np.ndarray
    selected_shots: list[int]

    def __post_init__(self):
        self.frame_mask = np.asarray(self.frame_mask, dtype=int)


def _scatter_table(K: np.ndarray) -> np.ndarray:
    """scatter[i, j] = within-segment scatter of frames [i, j), from the
    Gram matrix via prefix sums: sum of diag minus block mean."""
    T = K.shape[0]
    diag_cum = np.concatenate([[0.0], np.cumsum(np.diag(K))])
    P = np.zeros((T + 1, T + 1))
    P[1:, 1:] = np.cumsum(np.cumsum(K, axis=0), axis=1)
    scatter = np.full((T, T + 1), np.inf)
    for i in range(T):
        j = np.arange(i + 1, T + 1)
        block = P[j, j] - P[i, j] - P[j, i] + P[i, i]
        scatter[i, i + 1:] = (diag_cum[j] - diag_cum[i]) - block / (j - i)
    return scatter


def _singleton_partition(T: int) -> ShotPartition:
    return ShotPartition(change_points=np.arange(T), shot_lengths=np.ones(T, dtype=int))


def kts_segment(X, max_shots: int) -> ShotPartition:
    """Partition frames into visually coherent shots.

    Dynamic programming finds, for every candidate count m <= max_shots,
    the m-segmentation with least within-segment scatter under the linear
    kernel; the returned count minimizes scatter/T + g*m*(log(T/m)+1),
    with g estimated from the residual scatter at the finest allowed
    segmentation (plus a small floor, see _PENALTY_FLOOR). First index
    wins all argmin ties, so exactly piecewise-constant input recovers
    the fewest segments that fit it.

    Degenerate sizes: T < max_shots returns T singleton shots; a single
    frame is its own shot.
    """
    feats = X.data if isinstance(X, Matrix) else np.asarray(X, dtype=np.float64)
    T = feats.shape[0]
    if T < 1:
        raise ContractError("cannot segment an empty video")
    if max_shots < 1:
        raise ContractError(f"max_shots must be >= 1, got {max_shots}")
    if T < max_shots:
        return _singleton_partition(T)
    if T == 1:
        return ShotPartition(change_points=np.array([0]), shot_lengths=np.array([1]))

    M = int(min(max_shots, T))
    K = feats @ feats.T
    scatter = _scatter_table(K)

    # L[m, t]: least total scatter splitting the first t frames into m
    # segments; B[m, t]: start of the last segment in that optimum.
    L = np.full((M + 1, T + 1), np.inf)
    B = np.zeros((M + 1, T + 1), dtype=int)
    L[1, 1:] = scatter[0, 1:]
    for m in range(2, M + 1):
        for t in range(m, T + 1):
            starts = np.arange(m - 1, t)
            cand = L[m - 1, starts] + scatter[starts, t]
            k = int(np.argmin(cand))
            L[m, t] = cand[k]
            B[m, t] = starts[k]

    best = L[1:M + 1, T]
    counts = np.arange(1, M + 1, dtype=np.float64)
    penalty_shape = counts * (np.log(T / counts) + 1.0)
    scale = float(np.trace(K)) / T
    g = max(best[M - 1] / T, _PENALTY_FLOOR * (scale if scale > 0.0 else 1.0))
    costs = best / T + g * penalty_shape
    m_star = int(np.argmin(costs)) + 1

    cuts = []
    t = T
    for m in range(m_star, 1, -1):
        t = int(B[m, t])
        cuts.append(t)
    starts = np.array([0] + sorted(cuts), dtype=int)
    return ShotPartition.from_change_points(starts, T)


def shot_scores(y, part: ShotPartition) -> np.ndarray:
    """Mean frame score per shot."""
    scores = np.asarray(y, dtype=np.float64).reshape(-1)
    if scores.size != part.total_frames:
        raise ShapeError(
            f"score vector has {scores.size} frames, partition covers {part.total_frames}"
        )
    return np.array([scores[a:b].mean() for a, b in part.frame_ranges()])


def knapsack_select(lengths, scores, budget: int) -> list[int]:
    """Exact 0/1 knapsack: maximize summed scores of the selected shots
    with total length at most budget.

    DP over items in index order; a candidate that merely ties the value
    at some capacity is not taken, so on equal value the higher-indexed
    shot is dropped first and lower indices are preferred.
    """
    lens = np.asarray(lengths, dtype=int)
    vals = np.asarray(scores, dtype=np.float64)
    if lens.size != vals.size:
        raise ShapeError(f"lengths and scores differ: {lens.size} vs {vals.size}")
    if np.any(lens < 1):
        raise ContractError("every shot length must be >= 1")
    if budget < 0:
        raise ContractError(f"budget must be >= 0, got {budget}")
    budget = int(budget)
    S = lens.size
    dp = np.zeros(budget + 1)
    take = np.zeros((S, budget + 1), dtype=bool)
    for i in range(S):
        l, s = int(lens[i]), vals[i]
        if l > budget:
            continue
        cand = dp[:budget + 1 - l] + s
        better = cand > dp[l:]
        take[i, l:] = better
        dp[l:] = np.where(better, cand, dp[l:])
    selected = []
    w = budget
    for i in range(S - 1, -1, -1):
        if take[i, w]:
            selected.append(i)
            w -= int(lens[i])
    selected.reverse()
    return selected


def mask_from_selection(part: ShotPartition, selected: list[int]) -> SummaryMask:
    mask = np.zeros(part.total_frames, dtype=int)
    for i in selected:
        a, b = part.change_points[i], part.change_points[i] + part.shot_lengths[i]
        mask[a:b] = 1
    return SummaryMask(frame_mask=mask, selected_shots=list(selected))


def select_frames(frame_scores, part: ShotPartition, budget_ratio: float) -> SummaryMask:
    """Shot means -> knapsack under floor(budget_ratio * T) -> frame mask."""
    if not 0.0 < budget_ratio <= 1.0:
        raise ContractError(f"budget_ratio must be in (0, 1], got {budget_ratio}")
    T = part.total_frames
    budget = int(np.floor(budget_ratio * T))
    means = shot_scores(frame_scores, part)
    selected = knapsack_select(part.shot_lengths, means, budget)
    return mask_from_selection(part, selected)


def score_video(video, params: ModelParams, use_gda: bool = True,
                use_lca: bool = True) -> np.ndarray:
    """Frame importance curve for one video under the given parameters."""
    feats = video.features if isinstance(video.features, Matrix) else Matrix(video.features)
    out = forward_scores(feats, params, use_gda=use_gda, use_lca=use_lca)
    return out.scores.data[:, 0].copy()


@dataclass
class SummaryDetail:
    """Everything the summary file records for one video."""

    mask: SummaryMask
    partition: ShotPartition
    shot_means: np.ndarray
    frame_scores: np.ndarray


def default_max_shots(T: int) -> int:
    return max(2, T // 4)


def summarize_video(video, params: ModelParams, budget_ratio: float,
                    max_shots: int | None = None, use_gda: bool = True,
                    use_lca: bool = True) -> SummaryDetail:
    """Score, segment (reusing the video's own change points when it has
    them), and select shots under the budget."""
    if not 0.0 < budget_ratio <= 1.0:
        raise ContractError(f"budget_ratio must be in (0, 1], got {budget_ratio}")
    scores = score_video(video, params, use_gda=use_gda, use_lca=use_lca)
    T = scores.size
    part = video.change_points
    if part is None:
        part = kts_segment(video.features, max_shots if max_shots else default_max_shots(T))
    budget = int(np.floor(budget_ratio * T))
    means = shot_scores(scores, part)
    selected = knapsack_select(part.shot_lengths, means, budget)
    return SummaryDetail(
        mask=mask_from_selection(part, selected),
        partition=part,
        shot_means=means,
        frame_scores=scores,
    )


def generate_summary(video, params: ModelParams, budget_ratio: float) -> SummaryMask:
    return summarize_video(video, params, budget_ratio).mask


def binarize_ground_truth(frame_scores, part: ShotPartition,
                          budget_ratio: float) -> np.ndarray:
    """Annotated importance scores -> per-frame 0/1 labels, through the
    same shot-mean + knapsack path the summarizer uses."""
    return select_frames(frame_scores, part, budget_ratio).frame_mask
