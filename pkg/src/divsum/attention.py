"""Global diverse attention, local contextual attention, and fusion.

The global path scores every frame pair with a selectable similarity
(dot product, cosine, or negative squared Euclidean distance), normalizes
each column with softmax, and mixes value projections with the column
weights. The local path restricts attention to a +/-R frame window around
each anchor and adds learned relative-position embeddings to the keys.

Also houses the 2-D partition-map demonstration: color each point of a
plane by which seed point wins the similarity argmax. With the l2
similarity the result is exactly the Voronoi diagram, which is the
geometric argument for why that similarity diversifies attention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import ContractError, Matrix, NumericError, ShapeError, Tape

SIMILARITY_KINDS = ("dot", "cosine", "l2")
LCA_VARIANTS = ("literal", "contextual")
BOUNDARY_POLICIES = ("clamp", "zero")


@dataclass
class GdaParams:
    """Projections and similarity settings for the global attention path."""

    Wq: Matrix
    Wk: Matrix
    Wv: Matrix
    sim_kind: str = "l2"
    scale_q: float = 0.0  # 0 means "use d", resolved in __post_init__

    def __post_init__(self):
        d = self.Wq.rows
        for name, w in (("Wq", self.Wq), ("Wk", self.Wk), ("Wv", self.Wv)):
            if w.shape != (d, d):
                raise ShapeError(f"{name} must be square {d}x{d}, got {w.rows}x{w.cols}")
        if self.sim_kind not in SIMILARITY_KINDS:
            raise ContractError(f"unknown similarity kind: {self.sim_kind!r}")
        if self.scale_q == 0.0:
            self.scale_q = float(d)
        if self.scale_q <= 0.0:
            raise ContractError(f"scale_q must be positive, got {self.scale_q}")


@dataclass
class LcaParams:
    """Projections, relative embeddings, and window settings for the local path."""

    Wq2: Matrix
    Wk2: Matrix
    Wv2: Matrix
    rel_pos: Matrix
    neighbor_R: int = 4
    variant: str = "contextual"
    boundary: str = "clamp"

    def __post_init__(self):
        d = self.Wq2.rows
        for name, w in (("Wq2", self.Wq2), ("Wk2", self.Wk2), ("Wv2", self.Wv2)):
            if w.shape != (d, d):
                raise ShapeError(f"{name} must be square {d}x{d}, got {w.rows}x{w.cols}")
        if self.neighbor_R < 1:
            raise ContractError(f"neighbor_R must be >= 1, got {self.neighbor_R}")
        span = 2 * self.neighbor_R + 1
        if self.rel_pos.shape != (span, d):
            raise ShapeError(
                f"rel_pos must be {span}x{d} for R={self.neighbor_R}, "
                f"got {self.rel_pos.rows}x{self.rel_pos.cols}"
            )
        if self.variant not in LCA_VARIANTS:
            raise ContractError(f"unknown local-attention variant: {self.variant!r}")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ContractError(f"unknown window boundary policy: {self.boundary!r}")


@dataclass
class AttentionOutput:
    """Attended features plus the normalized weights that produced them.

    For the global path weights is T x T (columns sum to 1). For the local
    path it is T x (2R+1): row h is anchor h's window distribution.
    """

    features: Matrix
    weights: Matrix


def sinusoidal_positions(frame_count: int, dim: int) -> Matrix:
    """Fixed sin/cos position table: pair 2j carries sin and cos of
    i / 10000^(2j/dim). Requires an even dim so pairs close."""
    if dim % 2 != 0:
        raise ContractError(f"position table needs an even dim, got {dim}")
    i = np.arange(frame_count, dtype=np.float64)[:, None]
    j = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = i / np.power(10000.0, 2.0 * j / dim)
    table = np.zeros((frame_count, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return Matrix(table)


def pairwise_similarity(Q: Matrix, K: Matrix, kind: str, scale_q: float,
                        tape: Tape | None = None) -> Matrix:
    """T x T matrix of s(q_i, k_j) / sqrt(scale_q).

    The l2 kind (-|u-v|^2) is computed in the decomposed form
    2 u.v - |u|^2 - |v|^2, which is two rank-T products instead of a
    T^2 x d expansion and shares its heavy lifting with the dot kind.
    """
    if Q.shape != K.shape:
        raise ShapeError(f"similarity operands differ: {Q.rows}x{Q.cols} vs {K.rows}x{K.cols}")
    if scale_q <= 0.0:
        raise ContractError(f"scale_q must be positive, got {scale_q}")
    if kind == "dot":
        sim = ag.matmul(Q, ag.transpose(K, tape), tape)
    elif kind == "cosine":
        if np.any(np.sum(Q.data * Q.data, axis=1) == 0.0) or np.any(
            np.sum(K.data * K.data, axis=1) == 0.0
        ):
            raise NumericError("cosine similarity undefined for zero-norm rows")
        dots = ag.matmul(Q, ag.transpose(K, tape), tape)
        inv_q = ag.rsqrt(ag.row_norms_squared(Q, tape), tape)
        inv_k = ag.rsqrt(ag.row_norms_squared(K, tape), tape)
        sim = ag.multiply(ag.multiply(dots, inv_q, tape), ag.transpose(inv_k, tape), tape)
    elif kind == "l2":
        twice_dots = ag.scale(ag.matmul(Q, ag.transpose(K, tape), tape), 2.0, tape)
        sq_q = ag.row_norms_squared(Q, tape)
        sq_k = ag.row_norms_squared(K, tape)
        sim = ag.subtract(ag.subtract(twice_dots, sq_q, tape), ag.transpose(sq_k, tape), tape)
    else:
        raise ContractError(f"unknown similarity kind: {kind!r}")
    return ag.scale(sim, 1.0 / np.sqrt(scale_q), tape)


def gda_forward(X: Matrix, p: GdaParams, positions: Matrix | None,
                tape: Tape | None = None) -> AttentionOutput:
    """Global attention over all frame pairs.

    Positions, when given, are added on the query/key path only; values
    always project the raw features. Output row j mixes the value rows
    with the j-th column of the normalized weights.
    """
    if X.cols != p.Wq.rows:
        raise ShapeError(f"feature dim {X.cols} does not match projection dim {p.Wq.rows}")
    if positions is not None:
        if positions.shape != X.shape:
            raise ShapeError(
                f"positions {positions.rows}x{positions.cols} do not match "
                f"features {X.rows}x{X.cols}"
            )
        Xp = ag.add(X, positions, tape)
    else:
        Xp = X
    Q = ag.matmul(Xp, p.Wq, tape)
    K = ag.matmul(Xp, p.Wk, tape)
    V = ag.matmul(X, p.Wv, tape)
    A = pairwise_similarity(Q, K, p.sim_kind, p.scale_q, tape)
    At = ag.column_softmax(A, tape)
    features = ag.matmul(ag.transpose(At, tape), V, tape)
    return AttentionOutput(features=features, weights=At)


def _window_indices(T: int, h: int, R: int, boundary: str) -> np.ndarray:
    """Indices of the 2R+1 window rows around anchor h. Clamp policy
    replicates the edge frames; zero policy maps out-of-range slots to the
    sentinel index T (an appended all-zero row)."""
    raw = np.arange(h - R, h + R + 1)
    if boundary == "clamp":
        return np.clip(raw, 0, T - 1)
    padded = raw.copy()
    padded[(raw < 0) | (raw >= T)] = T
    return padded


def local_window(X: Matrix, h: int, R: int) -> Matrix:
    """The 2R+1 frames centered on h, edge frames replicated past the ends."""
    if not 0 <= h < X.rows:
        raise ContractError(f"anchor {h} out of range for {X.rows} frames")
    return Matrix(X.data[_window_indices(X.rows, h, R, "clamp")])


def lca_forward(X: Matrix, p: LcaParams, tape: Tape | None = None) -> AttentionOutput:
    """Windowed attention around every anchor frame.

    Per anchor h the window scores are B_ij = q_i . (k_j + a_|i-j|) / sqrt(d)
    over window-local indices, column-normalized. The contextual variant
    mixes the window's value rows with column R of the normalized scores;
    the literal variant multiplies the anchor's value projection by that
    column's sum, which normalization pins to 1 (kept for fidelity, see
    the collapse test).
    """
    T, d = X.shape
    R = p.neighbor_R
    if X.cols != p.Wq2.rows:
        raise ShapeError(f"feature dim {X.cols} does not match projection dim {p.Wq2.rows}")
    span = 2 * R + 1
    Q = ag.matmul(X, p.Wq2, tape)
    K = ag.matmul(X, p.Wk2, tape)
    V = ag.matmul(X, p.Wv2, tape)
    if p.boundary == "zero":
        pad = Matrix.zeros(1, d)
        Qx = ag.concat_rows([Q, pad], tape)
        Kx = ag.concat_rows([K, pad], tape)
        Vx = ag.concat_rows([V, pad], tape)
    else:
        Qx, Kx, Vx = Q, K, V
    offsets = np.arange(span)
    rel_index = np.abs(offsets[:, None] - offsets[None, :])  # |i-j| per window cell
    inv_sqrt_d = 1.0 / np.sqrt(d)
    rel_T = ag.transpose(p.rel_pos, tape)
    feature_rows = []
    window_weights = np.zeros((T, span))
    for h in range(T):
        idx = _window_indices(T, h, R, p.boundary)
        Qh = ag.gather_rows(Qx, idx, tape)
        Kh = ag.gather_rows(Kx, idx, tape)
        content = ag.matmul(Qh, ag.transpose(Kh, tape), tape)
        rel_scores = ag.take_per_row(ag.matmul(Qh, rel_T, tape), rel_index, tape)
        B = ag.scale(ag.add(content, rel_scores, tape), inv_sqrt_d, tape)
        Bt = ag.column_softmax(B, tape)
        anchor_col = ag.submatrix(Bt, 0, span, R, R + 1, tape)  # weights onto the anchor
        window_weights[h] = Bt.data[:, R]
        if p.variant == "contextual":
            Vh = ag.gather_rows(Vx, idx, tape)
            row = ag.matmul(ag.transpose(anchor_col, tape), Vh, tape)
        else:  # literal: summed weights times the anchor's own value row
            weight_sum = ag.sum_all(anchor_col, tape)
            anchor_value = ag.gather_rows(V, np.array([h]), tape)
            row = ag.multiply(anchor_value, weight_sum, tape)
        feature_rows.append(row)
    features = ag.concat_rows(feature_rows, tape)
    return AttentionOutput(features=features, weights=Matrix(window_weights))


def dca_fuse(X: Matrix, Xg: Matrix, Xl: Matrix, tape: Tape | None = None) -> Matrix:
    """Diversified contextual features: raw + global + local, elementwise."""
    if not (X.shape == Xg.shape == Xl.shape):
        raise ShapeError(
            f"fusion operands differ: {X.shape} vs {Xg.shape} vs {Xl.shape}"
        )
    return ag.add(ag.add(X, Xg, tape), Xl, tape)


# ---------------------------------------------------------------------------
# partition-map demonstration


@dataclass(frozen=True)
class GridSpec:
    """Rectangular evaluation grid for the partition map."""

    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    nx: int = 200
    ny: int = 200


def partition_map(points, kind: str, grid: GridSpec = GridSpec()):
    """Winner index of the similarity argmax at each grid cell.

    Returns (winners, xs, ys): winners[iy, ix] is the index of the point
    with the highest similarity to grid cell (xs[ix], ys[iy]); the lowest
    index wins ties. l2 winners form the Voronoi partition of the points.
    Cosine treats a zero-norm operand as similarity 0 (the grid may
    contain the origin).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ContractError("partition map needs at least two 2-D points")
    if np.all(pts == pts[0]):
        raise ContractError("degenerate point set: all points identical")
    if kind not in SIMILARITY_KINDS:
        raise ContractError(f"unknown similarity kind: {kind!r}")
    xs = np.linspace(grid.xmin, grid.xmax, grid.nx)
    ys = np.linspace(grid.ymin, grid.ymax, grid.ny)
    gx = xs[None, :]
    gy = ys[:, None]
    sims = np.zeros((pts.shape[0], grid.ny, grid.nx))
    for k, (px, py) in enumerate(pts):
        if kind == "l2":
            sims[k] = -((gx - px) ** 2 + (gy - py) ** 2)
        elif kind == "dot":
            sims[k] = gx * px + gy * py
        else:
            dot = gx * px + gy * py
            norm_u = np.sqrt(gx * gx + gy * gy)
            norm_p = np.sqrt(px * px + py * py)
            denom = norm_u * norm_p
            with np.errstate(invalid="ignore", divide="ignore"):
                c = np.where(denom > 0.0, dot / np.where(denom > 0.0, denom, 1.0), 0.0)
            sims[k] = c
    winners = np.argmax(sims, axis=0)
    return winners, xs, ys


def partition_map_csv(points, kind: str, grid: GridSpec = GridSpec()) -> str:
    """Partition map as CSV text with header x,y,winner_index."""
    winners, xs, ys = partition_map(points, kind, grid)
    lines = ["x,y,winner_index"]
    for iy in range(len(ys)):
        for ix in range(len(xs)):
            lines.append(f"{xs[ix]:.8g},{ys[iy]:.8g},{winners[iy, ix]}")
    return "\n".join(lines) + "\n"
