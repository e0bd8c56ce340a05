"""Parameter initialization, the Adam optimizer, and the training loop.

One optimizer step per video, videos visited in a fixed seeded order,
loss = classification + alpha * repelling + beta * reconstruction (the
classification term only in supervised mode). Checkpoints are a versioned
little-endian binary: config text, every parameter matrix shape-tagged by
name, the optimizer moments, and the epoch counter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .attention import GdaParams, LcaParams
from .autograd import ContractError, Matrix, Tape
from .config import TrainConfig, config_from_text, config_to_text
from .heads import Affine, HeadParams, LossWeights
from .model import ModelParams, forward_loss

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_MAGIC = b"DSCK"
CHECKPOINT_VERSION = 1


def _xavier(rng, rows: int, cols: int) -> Matrix:
    bound = np.sqrt(6.0 / (rows + cols))
    return Matrix(rng.uniform(-bound, bound, size=(rows, cols)))


def init_params(d: int, R: int, seed: int, cfg: TrainConfig | None = None) -> ModelParams:
    """Fresh model parameters, Xavier-uniform weights and zero biases.

    Weight draws happen in the named-parameter order (biases are zeros
    and consume no randomness), so the same seed always produces
    bit-identical parameters.
    """
    if d < 1:
        raise ContractError(f"feature dim must be >= 1, got {d}")
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    span = 2 * R + 1
    Wq, Wk, Wv = (_xavier(rng, d, d) for _ in range(3))
    Wq2, Wk2, Wv2 = (_xavier(rng, d, d) for _ in range(3))
    rel_pos = _xavier(rng, span, d)
    score1_W = _xavier(rng, d, d)
    score2_W = _xavier(rng, d, 1)
    embed_W = _xavier(rng, d, d)
    recon1_W = _xavier(rng, d, d)
    recon2_W = _xavier(rng, d, d)
    zero_bias = lambda cols: Matrix.zeros(1, cols)
    return ModelParams(
        gda=GdaParams(Wq=Wq, Wk=Wk, Wv=Wv, sim_kind=cfg.sim_kind, scale_q=cfg.scale_q),
        lca=LcaParams(
            Wq2=Wq2, Wk2=Wk2, Wv2=Wv2, rel_pos=rel_pos, neighbor_R=R,
            variant=cfg.lca_variant, boundary=cfg.window_boundary,
        ),
        heads=HeadParams(
            score1=Affine(W=score1_W, b=zero_bias(d)),
            score2=Affine(W=score2_W, b=zero_bias(1)),
            embed=Affine(W=embed_W, b=zero_bias(d)),
            recon1=Affine(W=recon1_W, b=zero_bias(d)),
            recon2=Affine(W=recon2_W, b=zero_bias(d)),
            recon_final_sigmoid=cfg.recon_final_sigmoid,
        ),
        use_positions=cfg.use_positions,
    )


@dataclass
class AdamState:
    """First/second moment accumulators, parallel to named_parameters."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        shapes = [p.data.shape for _, p in params.named_parameters()]
        return cls(m=[np.zeros(s) for s in shapes], v=[np.zeros(s) for s in shapes])


def adam_step(params: ModelParams, state: AdamState, cfg: TrainConfig):
    """One Adam update with bias correction, then decoupled weight decay
    (theta <- theta - lr * wd * theta, applied after the gradient step).
    Gradients are read off the parameter matrices and must be populated.
    """
    named = params.named_parameters()
    if len(named) != len(state.m):
        raise ContractError("optimizer state does not match the parameter set")
    for _, p in named:
        if p.grad is None:
            raise ContractError("adam_step called with unpopulated gradients")
    state.step += 1
    t = state.step
    corr1 = 1.0 - ADAM_BETA1 ** t
    corr2 = 1.0 - ADAM_BETA2 ** t
    for i, (_, p) in enumerate(named):
        g = p.grad
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = state.m[i] / corr1
        v_hat = state.v[i] / corr2
        p.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if cfg.weight_decay != 0.0:
            p.data -= cfg.learning_rate * cfg.weight_decay * p.data


@dataclass
class TrainResult:
    params: ModelParams
    state: AdamState  # final optimizer state, checkpoint-ready
    history: list[float]  # per-epoch mean total loss
    part_history: dict[str, list[float]]  # "cls" (supervised), "repel", "recon"
    epochs_run: int


def train(videos: list, cfg: TrainConfig) -> TrainResult:
    """Run the optimization over the given videos.

    Vists videos in one seeded shuffle reused every epoch (fixed order),
    one optimizer step per video. In unsupervised mode a video's labels
    are never read. Optional early stop ends training once the mean loss
    stops improving by min_delta for patience epochs.
    """
    if not videos:
        raise ContractError("cannot train on an empty video set")
    dims = {v.features.shape[1] for v in videos}
    if len(dims) != 1:
        raise ContractError(f"videos disagree on feature dim: {sorted(dims)}")
    d = dims.pop()
    weights = LossWeights(alpha=cfg.alpha, beta=cfg.beta, supervised=cfg.supervised)
    if cfg.supervised:
        missing = [v.id for v in videos if v.gt_binary is None]
        if missing:
            raise ContractError(f"supervised training needs labels; missing on {missing}")

    params = init_params(d, cfg.neighbor_R, cfg.seed, cfg)
    state = AdamState.for_params(params)
    order = np.random.default_rng(cfg.seed).permutation(len(videos))
    feats = [Matrix(np.asarray(v.features, dtype=np.float64)) for v in videos]
    labels = [np.asarray(v.gt_binary, dtype=np.float64) if cfg.supervised else None
              for v in videos]

    history: list[float] = []
    part_history: dict[str, list[float]] = {"repel": [], "recon": []}
    if cfg.supervised:
        part_history["cls"] = []
    best = np.inf
    stale = 0
    epochs_run = 0
    for _ in range(cfg.epochs):
        totals, clses, repels, recons = [], [], [], []
        for i in order:
            params.zero_grads()
            tape = Tape()
            out = forward_loss(feats[i], params, weights, labels[i], tape,
                               use_gda=cfg.use_gda, use_lca=cfg.use_lca)
            ag.backward(out.total, tape)
            adam_step(params, state, cfg)
            totals.append(out.total.item())
            repels.append(out.parts.repel.item())
            recons.append(out.parts.recon.item())
            if out.parts.cls is not None:
                clses.append(out.parts.cls.item())
        history.append(float(np.mean(totals)))
        part_history["repel"].append(float(np.mean(repels)))
        part_history["recon"].append(float(np.mean(recons)))
        if cfg.supervised:
            part_history["cls"].append(float(np.mean(clses)))
        epochs_run += 1
        if cfg.early_stop:
            if history[-1] < best - cfg.min_delta:
                best = history[-1]
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return TrainResult(params=params, state=state, history=history,
                       part_history=part_history, epochs_run=epochs_run)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: ModelParams, state: AdamState, cfg: TrainConfig,
                    epoch: int):
    named = params.named_parameters()
    cfg_raw = config_to_text(cfg).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(cfg_raw)), cfg_raw,
        struct.pack("<II", epoch, len(named)),
    ]
    for name, p in named:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<II", p.rows, p.cols))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    parts.append(struct.pack("<I", state.step))
    for arrs in (state.m, state.v):
        for a in arrs:
            parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path):
    """Returns (params, adam_state, config, epoch). Byte layout must match
    what save_checkpoint wrote; any shortfall names the failing piece."""
    blob = Path(path).read_bytes()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise ContractError(f"{path}: checkpoint truncated while reading {what}")
        out = blob[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != CHECKPOINT_MAGIC:
        raise ContractError(f"{path}: not a checkpoint file (bad magic)")
    version = struct.unpack("<I", take(4, "version"))[0]
    if version != CHECKPOINT_VERSION:
        raise ContractError(f"{path}: checkpoint version {version}, "
                            f"this build reads {CHECKPOINT_VERSION}")
    cfg_len = struct.unpack("<I", take(4, "config length"))[0]
    cfg = config_from_text(take(cfg_len, "config").decode("utf-8"))
    epoch, count = struct.unpack("<II", take(8, "epoch/parameter count"))
    tensors: dict[str, np.ndarray] = {}
    order: list[str] = []
    for _ in range(count):
        name_len = struct.unpack("<I", take(4, "parameter name length"))[0]
        name = take(name_len, "parameter name").decode("utf-8")
        rows, cols = struct.unpack("<II", take(8, f"{name} shape"))
        data = np.frombuffer(take(8 * rows * cols, f"{name} data"), dtype="<f8")
        tensors[name] = data.reshape(rows, cols).copy()
        order.append(name)
    params = _assemble_params(tensors, cfg)
    expected = [n for n, _ in params.named_parameters()]
    if order != expected:
        raise ContractError(f"{path}: checkpoint parameter order does not match this build")
    step = struct.unpack("<I", take(4, "optimizer step"))[0]
    shapes = [tensors[n].shape for n in expected]
    m = [np.frombuffer(take(8 * r * c, "first moments"), dtype="<f8").reshape(r, c).copy()
         for r, c in shapes]
    v = [np.frombuffer(take(8 * r * c, "second moments"), dtype="<f8").reshape(r, c).copy()
         for r, c in shapes]
    if pos != len(blob):
        raise ContractError(f"{path}: {len(blob) - pos} unexpected trailing bytes")
    return params, AdamState(m=m, v=v, step=step), cfg, epoch


def _assemble_params(tensors: dict[str, np.ndarray], cfg: TrainConfig) -> ModelParams:
    def mat(name):
        if name not in tensors:
            raise ContractError(f"checkpoint is missing parameter {name}")
        return Matrix(tensors[name])

    R = (tensors["lca.rel_pos"].shape[0] - 1) // 2
    return ModelParams(
        gda=GdaParams(Wq=mat("gda.Wq"), Wk=mat("gda.Wk"), Wv=mat("gda.Wv"),
                      sim_kind=cfg.sim_kind, scale_q=cfg.scale_q),
        lca=LcaParams(Wq2=mat("lca.Wq2"), Wk2=mat("lca.Wk2"), Wv2=mat("lca.Wv2"),
                      rel_pos=mat("lca.rel_pos"), neighbor_R=R,
                      variant=cfg.lca_variant, boundary=cfg.window_boundary),
        heads=HeadParams(
            score1=Affine(W=mat("heads.score1.W"), b=mat("heads.score1.b")),
            score2=Affine(W=mat("heads.score2.W"), b=mat("heads.score2.b")),
            embed=Affine(W=mat("heads.embed.W"), b=mat("heads.embed.b")),
            recon1=Affine(W=mat("heads.recon1.W"), b=mat("heads.recon1.b")),
            recon2=Affine(W=mat("heads.recon2.W"), b=mat("heads.recon2.b")),
            recon_final_sigmoid=cfg.recon_final_sigmoid,
        ),
        use_positions=cfg.use_positions,
    )
