"""Prediction heads and the three-term training objective.

Three heads read the fused frame features: a score head mapping each
frame to an importance probability, a linear embedding head feeding the
repelling loss, and a two-layer reconstruction head. The combined
objective is classification + alpha * repelling + beta * reconstruction,
with the classification term dropped in unsupervised mode.

Note on the reconstruction head: its final sigmoid is off by default
because ingested features are generally unbounded; a sigmoid output could
then never match them. Enable recon_final_sigmoid only for datasets whose
features are scaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import ContractError, Matrix, NumericError, ShapeError, Tape

BCE_EPS = 1e-7


@dataclass
class Affine:
    """One fully-connected layer: x @ W + b with b broadcast over rows."""

    W: Matrix
    b: Matrix

    def __post_init__(self):
        if self.b.shape != (1, self.W.cols):
            raise ShapeError(
                f"bias must be 1x{self.W.cols}, got {self.b.rows}x{self.b.cols}"
            )

    def apply(self, x: Matrix, tape: Tape | None = None) -> Matrix:
        return ag.add(ag.matmul(x, self.W, tape), self.b, tape)


@dataclass
class HeadParams:
    score1: Affine  # d -> d, ReLU after
    score2: Affine  # d -> 1, sigmoid after
    embed: Affine  # d -> d, purely linear
    recon1: Affine  # d -> d, sigmoid after
    recon2: Affine  # d -> d, sigmoid optional (see module note)
    recon_final_sigmoid: bool = False

    def __post_init__(self):
        d = self.score1.W.rows
        checks = [
            ("score1", self.score1, (d, d)),
            ("score2", self.score2, (d, 1)),
            ("embed", self.embed, (d, d)),
            ("recon1", self.recon1, (d, d)),
            ("recon2", self.recon2, (d, d)),
        ]
        for name, layer, shape in checks:
            if layer.W.shape != shape:
                raise ShapeError(
                    f"{name} weight must be {shape[0]}x{shape[1]}, "
                    f"got {layer.W.rows}x{layer.W.cols}"
                )


@dataclass
class LossWeights:
    alpha: float = 0.1  # repelling term
    beta: float = 1.0  # reconstruction term
    supervised: bool = True

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ContractError(
                f"loss weights must be nonnegative, got alpha={self.alpha} beta={self.beta}"
            )


@dataclass
class LossParts:
    """The scalar loss terms, pre-weighting. cls is None in unsupervised runs."""

    cls: Matrix | None
    repel: Matrix
    recon: Matrix


def score_frames(Xt: Matrix, h: HeadParams, tape: Tape | None = None) -> Matrix:
    """Per-frame importance in (0,1): sigmoid(affine2(relu(affine1(x))))."""
    hidden = ag.relu(h.score1.apply(Xt, tape), tape)
    return ag.sigmoid(h.score2.apply(hidden, tape), tape)


def embed_frames(Xt: Matrix, h: HeadParams, tape: Tape | None = None) -> Matrix:
    """Linear embedding feeding the repelling loss; deliberately no activation."""
    return h.embed.apply(Xt, tape)


def reconstruct_frames(Xt: Matrix, h: HeadParams, tape: Tape | None = None) -> Matrix:
    hidden = ag.sigmoid(h.recon1.apply(Xt, tape), tape)
    out = h.recon2.apply(hidden, tape)
    if h.recon_final_sigmoid:
        out = ag.sigmoid(out, tape)
    return out


def bce_loss(y: Matrix, gt, tape: Tape | None = None) -> Matrix:
    """Mean binary cross-entropy of predicted probabilities y (T x 1)
    against 0/1 targets, with predictions clipped to [eps, 1-eps]."""
    target = gt if isinstance(gt, Matrix) else Matrix.column(gt)
    if y.cols != 1 or target.cols != 1:
        raise ShapeError("bce_loss expects column vectors")
    if y.rows != target.rows:
        raise ShapeError(f"prediction/target lengths differ: {y.rows} vs {target.rows}")
    T = y.rows
    yc = ag.clip(y, BCE_EPS, 1.0 - BCE_EPS, tape)
    ones = Matrix.ones(T, 1)
    pos = ag.multiply(target, ag.log(yc, tape), tape)
    neg = ag.multiply(
        ag.subtract(ones, target, tape), ag.log(ag.subtract(ones, yc, tape), tape), tape
    )
    return ag.scale(ag.sum_all(ag.add(pos, neg, tape), tape), -1.0 / T, tape)


def repelling_loss(E: Matrix, tape: Tape | None = None) -> Matrix:
    """Mean pairwise cosine similarity over distinct embedding rows.

    The diagonal of the cosine Gram matrix is identically 1 with zero
    gradient, so it is removed as the constant T after the full sum.
    """
    T = E.rows
    if T < 2:
        raise ContractError(f"repelling loss needs at least 2 rows, got {T}")
    norms = np.sum(E.data * E.data, axis=1)
    if np.any(norms == 0.0):
        raise NumericError("repelling loss undefined for zero-norm embedding rows")
    unit = ag.multiply(E, ag.rsqrt(ag.row_norms_squared(E, tape), tape), tape)
    gram = ag.matmul(unit, ag.transpose(unit, tape), tape)
    off_diag = ag.subtract(ag.sum_all(gram, tape), Matrix.scalar(float(T)), tape)
    return ag.scale(off_diag, 1.0 / (T * (T - 1)), tape)


def reconstruction_loss(X: Matrix, Xrec: Matrix, tape: Tape | None = None) -> Matrix:
    """Mean Euclidean distance (not squared) between original and
    reconstructed frame rows."""
    if X.shape != Xrec.shape:
        raise ShapeError(f"shape mismatch: {X.shape} vs {Xrec.shape}")
    dist = ag.sqrt(ag.row_norms_squared(ag.subtract(X, Xrec, tape), tape), tape)
    return ag.scale(ag.sum_all(dist, tape), 1.0 / X.rows, tape)


def total_loss(parts: LossParts, w: LossWeights, tape: Tape | None = None) -> Matrix:
    """cls + alpha*repel + beta*recon, or without cls in unsupervised mode."""
    weighted = ag.add(
        ag.scale(parts.repel, w.alpha, tape), ag.scale(parts.recon, w.beta, tape), tape
    )
    if not w.supervised:
        return weighted
    if parts.cls is None:
        raise ContractError("supervised objective requires a classification term")
    return ag.add(parts.cls, weighted, tape)
