"""F-score, rank correlations, cross-validation protocols, and baselines.

F-scores compare a predicted key-frame mask against per-user reference
summaries, aggregated max- or mean-over-users (a per-dataset convention).
Kendall tau uses the tie-corrected tau-b form, Spearman rho uses
tie-averaged ranks; a constant score vector makes either undefined, which
is reported as 0.0 alongside a RuntimeWarning.

Protocols: canonical trains and tests inside one corpus by seeded folds;
augmented adds every other corpus to each fold's training half; transfer
trains on the other corpora only and tests on the whole target corpus.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import ContractError, ShapeError
from .config import TrainConfig
from .data import AGGREGATION_MODES
from .segmentation import SummaryMask, summarize_video
from .training import train

PROTOCOL_MODES = ("canonical", "augmented", "transfer")

RANK_UNDEFINED_MSG = "rank correlation undefined for constant scores; reporting 0"


@dataclass
class EvalProtocol:
    mode: str = "canonical"
    folds: int = 5
    agg: str = "mean_over_users"
    seed: int = 0
    # corpus under evaluation; None means the videos all share one tag
    target_corpus: str | None = None

    def __post_init__(self):
        if self.mode not in PROTOCOL_MODES:
            raise ContractError(f"unknown protocol mode: {self.mode!r}")
        if self.folds < 1:
            raise ContractError(f"folds must be >= 1, got {self.folds}")
        if self.agg not in AGGREGATION_MODES:
            raise ContractError(f"unknown aggregation mode: {self.agg!r}")


@dataclass
class FoldSplit:
    train_ids: list[str]
    test_ids: list[str]


@dataclass
class EvalReport:
    mode: str
    agg: str
    folds: int
    seed: int
    budget_ratio: float
    per_video_f: dict[str, float]
    per_video_tau: dict[str, float]
    per_video_rho: dict[str, float]
    mean_f: float
    kendall: float
    spearman: float
    label: str = "trained"  # trained | random | human


# ---------------------------------------------------------------------------
# metrics


def _as_mask(pred) -> np.ndarray:
    if isinstance(pred, SummaryMask):
        pred = pred.frame_mask
    arr = np.asarray(pred)
    if arr.ndim != 1:
        raise ShapeError(f"summary mask must be 1-D, got shape {arr.shape}")
    return arr.astype(bool)


def fscore(pred, user) -> float:
    """Harmonic mean of frame precision/recall against one user summary,
    as a percentage. Zero when either side is empty or they never overlap."""
    p = _as_mask(pred)
    u = _as_mask(user)
    if p.size != u.size:
        raise ShapeError(f"mask lengths differ: {p.size} vs {u.size}")
    np_, nu = int(p.sum()), int(u.sum())
    if np_ == 0 or nu == 0:
        return 0.0
    overlap = int((p & u).sum())
    prec = overlap / np_
    rec = overlap / nu
    if prec + rec == 0.0:
        return 0.0
    return 200.0 * prec * rec / (prec + rec)


def _check_rank_inputs(pred_scores, gt_scores):
    x = np.asarray(pred_scores, dtype=np.float64).ravel()
    y = np.asarray(gt_scores, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ShapeError(f"score lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ContractError("rank correlation needs at least 2 entries")
    return x, y


def kendall_tau(pred_scores, gt_scores) -> float:
    """Tau-b: (concordant - discordant) pairs over the tie-corrected pair
    count. Exact integer pair counting, no sampling."""
    x, y = _check_rank_inputs(pred_scores, gt_scores)
    n = x.size
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    prod = sx[iu] * sy[iu]
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    n0 = n * (n - 1) // 2
    ties_x = int(np.count_nonzero(sx[iu] == 0))
    ties_y = int(np.count_nonzero(sy[iu] == 0))
    denom_x = n0 - ties_x
    denom_y = n0 - ties_y
    if denom_x == 0 or denom_y == 0:
        warnings.warn(RANK_UNDEFINED_MSG, RuntimeWarning, stacklevel=2)
        return 0.0
    return (concordant - discordant) / np.sqrt(float(denom_x) * float(denom_y))


def _mean_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; equal values share the mean of their rank block."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.arange(1, x.size + 1, dtype=np.float64)
    for value in np.unique(x):
        hit = x == value
        if hit.sum() > 1:
            ranks[hit] = ranks[hit].mean()
    return ranks


def spearman_rho(pred_scores, gt_scores) -> float:
    """Pearson correlation of tie-averaged ranks. With no ties this equals
    the classical 1 - 6*sum(d^2) / (n*(n^2-1))."""
    x, y = _check_rank_inputs(pred_scores, gt_scores)
    rx, ry = _mean_ranks(x), _mean_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    vx, vy = float(dx @ dx), float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        warnings.warn(RANK_UNDEFINED_MSG, RuntimeWarning, stacklevel=2)
        return 0.0
    return float(dx @ dy) / np.sqrt(vx * vy)


def video_fscore(mask, video, agg: str) -> float:
    """Aggregate F over a video's user summaries (max or mean); a video
    with only a single consensus labeling is scored against that."""
    if agg not in AGGREGATION_MODES:
        raise ContractError(f"unknown aggregation mode: {agg!r}")
    if video.user_summaries:
        scores = [fscore(mask, u) for u in video.user_summaries]
        return float(max(scores) if agg == "max_over_users" else np.mean(scores))
    if video.gt_binary is not None:
        return fscore(mask, video.gt_binary)
    raise ContractError(f"video {video.id} carries no reference summaries")


# ---------------------------------------------------------------------------
# fold construction


def _split_corpora(videos, protocol: EvalProtocol):
    tags = sorted({v.corpus_tag for v in videos})
    target = protocol.target_corpus
    if target is None:
        if len(tags) != 1:
            raise ContractError(
                f"multiple corpora present ({tags}); protocol needs target_corpus"
            )
        target = tags[0]
    elif target not in tags:
        raise ContractError(f"target corpus {target!r} not in dataset (has {tags})")
    target_ids = sorted(v.id for v in videos if v.corpus_tag == target)
    aux_ids = sorted(v.id for v in videos if v.corpus_tag != target)
    return target_ids, aux_ids


def build_folds(videos, protocol: EvalProtocol) -> list[FoldSplit]:
    """Seeded fold splits. Membership depends only on the video ids and the
    seed, not on list order. folds=1 in canonical mode is the deliberate
    train==test leak used as an optimization smoke test."""
    target_ids, aux_ids = _split_corpora(videos, protocol)
    if protocol.mode == "transfer":
        if not aux_ids:
            raise ContractError("transfer protocol needs at least one auxiliary corpus")
        return [FoldSplit(train_ids=aux_ids, test_ids=list(target_ids))]
    if protocol.folds == 1:
        train = list(target_ids) + (aux_ids if protocol.mode == "augmented" else [])
        return [FoldSplit(train_ids=train, test_ids=list(target_ids))]
    if protocol.folds > len(target_ids):
        raise ContractError(
            f"{protocol.folds} folds over {len(target_ids)} target videos"
        )
    order = np.random.default_rng(protocol.seed).permutation(len(target_ids))
    shuffled = [target_ids[i] for i in order]
    chunks = np.array_split(np.arange(len(shuffled)), protocol.folds)
    splits = []
    for chunk in chunks:
        test = [shuffled[i] for i in chunk]
        train = [vid for vid in shuffled if vid not in set(test)]
        if protocol.mode == "augmented":
            train = train + aux_ids
        splits.append(FoldSplit(train_ids=train, test_ids=test))
    return splits


def save_splits(path, splits: list[FoldSplit], protocol: EvalProtocol) -> Path:
    path = Path(path)
    path.write_text(json.dumps({
        "mode": protocol.mode,
        "folds": protocol.folds,
        "agg": protocol.agg,
        "seed": protocol.seed,
        "target_corpus": protocol.target_corpus,
        "splits": [{"train": s.train_ids, "test": s.test_ids} for s in splits],
    }, indent=2) + "\n")
    return path


def load_splits(path) -> tuple[list[FoldSplit], dict]:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ContractError(f"{path}: split file not found")
    except json.JSONDecodeError as e:
        raise ContractError(f"{path}: split file is not valid JSON ({e})")
    try:
        splits = [FoldSplit(train_ids=list(s["train"]), test_ids=list(s["test"]))
                  for s in raw["splits"]]
    except KeyError as e:
        raise ContractError(f"{path}: split file missing field {e}")
    meta = {k: raw.get(k) for k in ("mode", "folds", "agg", "seed", "target_corpus")}
    return splits, meta


# ---------------------------------------------------------------------------
# protocol runs


def _finish_report(protocol, budget_ratio, per_f, per_tau, per_rho, label) -> EvalReport:
    if per_tau:
        kendall = float(np.mean(list(per_tau.values())))
        spearman = float(np.mean(list(per_rho.values())))
    else:
        warnings.warn("no videos carried frame-level scores; rank metrics are 0",
                      RuntimeWarning, stacklevel=3)
        kendall = spearman = 0.0
    return EvalReport(
        mode=protocol.mode, agg=protocol.agg, folds=protocol.folds,
        seed=protocol.seed, budget_ratio=budget_ratio,
        per_video_f=per_f, per_video_tau=per_tau, per_video_rho=per_rho,
        mean_f=float(np.mean(list(per_f.values()))) if per_f else 0.0,
        kendall=kendall, spearman=spearman, label=label,
    )


def _score_test_videos(by_id, test_ids, params, budget_ratio, agg, per_f, per_tau, per_rho):
    for vid in test_ids:
        v = by_id[vid]
        detail = summarize_video(v, params, budget_ratio)
        per_f[vid] = video_fscore(detail.mask, v, agg)
        if v.gt_scores is not None:
            per_tau[vid] = kendall_tau(detail.frame_scores, v.gt_scores)
            per_rho[vid] = spearman_rho(detail.frame_scores, v.gt_scores)


def evaluate(videos, cfg: TrainConfig, protocol: EvalProtocol,
             budget_ratio: float = 0.15,
             splits: list[FoldSplit] | None = None) -> EvalReport:
    """Train per fold on the split's training half, summarize the held-out
    videos, and average F / tau / rho over every test video."""
    if not videos:
        raise ContractError("cannot evaluate an empty video set")
    by_id = {v.id: v for v in videos}
    if len(by_id) != len(videos):
        raise ContractError("video ids are not unique")
    if splits is None:
        splits = build_folds(videos, protocol)
    per_f: dict[str, float] = {}
    per_tau: dict[str, float] = {}
    per_rho: dict[str, float] = {}
    for split in splits:
        unknown = [i for i in split.train_ids + split.test_ids if i not in by_id]
        if unknown:
            raise ContractError(f"split references unknown video ids: {unknown}")
        result = train([by_id[i] for i in split.train_ids], cfg)
        _score_test_videos(by_id, split.test_ids, result.params, budget_ratio,
                           protocol.agg, per_f, per_tau, per_rho)
    return _finish_report(protocol, budget_ratio, per_f, per_tau, per_rho, "trained")


def evaluate_with_params(videos, params, protocol: EvalProtocol,
                         budget_ratio: float = 0.15, label: str = "trained") -> EvalReport:
    """Metric pass with fixed, already-trained parameters: every video is a
    test video. Never mutates params."""
    if not videos:
        raise ContractError("cannot evaluate an empty video set")
    by_id = {v.id: v for v in videos}
    per_f: dict[str, float] = {}
    per_tau: dict[str, float] = {}
    per_rho: dict[str, float] = {}
    _score_test_videos(by_id, [v.id for v in videos], params, budget_ratio,
                       protocol.agg, per_f, per_tau, per_rho)
    return _finish_report(protocol, budget_ratio, per_f, per_tau, per_rho, label)


def random_baseline(videos, protocol: EvalProtocol,
                    budget_ratio: float = 0.15) -> EvalReport:
    """Uniform-random importance scores pushed through the same shot
    selection; the reference point for Table-style comparisons."""
    from .segmentation import default_max_shots, kts_segment, select_frames

    if not videos:
        raise ContractError("cannot evaluate an empty video set")
    rng = np.random.default_rng(protocol.seed)
    per_f: dict[str, float] = {}
    per_tau: dict[str, float] = {}
    per_rho: dict[str, float] = {}
    for v in videos:
        scores = rng.uniform(size=v.frame_count)
        part = v.change_points
        if part is None:
            part = kts_segment(v.features, default_max_shots(v.frame_count))
        mask = select_frames(scores, part, budget_ratio)
        per_f[v.id] = video_fscore(mask, v, protocol.agg)
        if v.gt_scores is not None:
            per_tau[v.id] = kendall_tau(scores, v.gt_scores)
            per_rho[v.id] = spearman_rho(scores, v.gt_scores)
    return _finish_report(protocol, budget_ratio, per_f, per_tau, per_rho, "random")


def human_baseline(videos, protocol: EvalProtocol,
                   budget_ratio: float = 0.15) -> EvalReport:
    """Annotator agreement reference: each user summary scored against the
    other users (leave one out), and against the frame-level scores for the
    rank metrics. Videos without user summaries are skipped."""
    per_f: dict[str, float] = {}
    per_tau: dict[str, float] = {}
    per_rho: dict[str, float] = {}
    for v in videos:
        users = v.user_summaries or []
        if len(users) >= 2:
            outs = []
            for i, u in enumerate(users):
                rest = [fscore(u, w) for j, w in enumerate(users) if j != i]
                outs.append(max(rest) if protocol.agg == "max_over_users"
                            else float(np.mean(rest)))
            per_f[v.id] = float(np.mean(outs))
        if users and v.gt_scores is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                taus = [kendall_tau(u.astype(float), v.gt_scores) for u in users]
                rhos = [spearman_rho(u.astype(float), v.gt_scores) for u in users]
            per_tau[v.id] = float(np.mean(taus))
            per_rho[v.id] = float(np.mean(rhos))
    if not per_f:
        raise ContractError("human baseline needs videos with >= 2 user summaries")
    return _finish_report(protocol, budget_ratio, per_f, per_tau, per_rho, "human")


# ---------------------------------------------------------------------------
# report rendering


def report_text(report: EvalReport) -> str:
    lines = [
        f"protocol: {report.mode}  folds: {report.folds}  agg: {report.agg}  "
        f"seed: {report.seed}  budget: {report.budget_ratio}  source: {report.label}",
        "",
        f"{'video':<24} {'F(%)':>8} {'tau':>8} {'rho':>8}",
    ]
    for vid in sorted(report.per_video_f):
        tau = report.per_video_tau.get(vid)
        rho = report.per_video_rho.get(vid)
        lines.append(
            f"{vid:<24} {report.per_video_f[vid]:>8.2f} "
            f"{tau if tau is not None else float('nan'):>8.3f} "
            f"{rho if rho is not None else float('nan'):>8.3f}"
        )
    lines.append("")
    lines.append(f"{'mean':<24} {report.mean_f:>8.2f} {report.kendall:>8.3f} "
                 f"{report.spearman:>8.3f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    rows = ["video,fscore,kendall_tau,spearman_rho"]
    for vid in sorted(report.per_video_f):
        tau = report.per_video_tau.get(vid, float("nan"))
        rho = report.per_video_rho.get(vid, float("nan"))
        rows.append(f"{vid},{report.per_video_f[vid]:.6f},{tau:.6f},{rho:.6f}")
    rows.append(f"mean,{report.mean_f:.6f},{report.kendall:.6f},{report.spearman:.6f}")
    return "\n".join(rows) + "\n"
