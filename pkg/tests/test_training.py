import numpy as np
import pytest

from divsum import autograd as ag
from divsum import heads as hd
from divsum import training as tr
from divsum.autograd import ContractError, Matrix, Tape
from divsum.config import ConfigError, TrainConfig, config_from_text, config_to_text, \
    load_config, parse_config_text
from divsum.data import VideoRecord, synth_generate, SynthSpec
from divsum.model import forward_scores


def tiny_cfg(**kw):
    base = dict(learning_rate=1e-3, weight_decay=0.0, epochs=2, neighbor_R=1, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def tiny_videos(n=3, T=10, d=4, seed=0):
    return synth_generate(SynthSpec(videos=n, frames=T, dim=d, shots_per_video=3,
                                    seed=seed, budget_ratio=0.3))


# ---------------------------------------------------------------------------
# config


def test_config_defaults_are_valid():
    cfg = TrainConfig()
    assert cfg.alpha == 0.1 and cfg.beta == 1.0 and cfg.sim_kind == "l2"
    assert cfg.recon_final_sigmoid is False and cfg.early_stop is False


def test_config_text_round_trip():
    cfg = TrainConfig(learning_rate=0.5, epochs=7, sim_kind="cosine", use_lca=False)
    assert config_from_text(config_to_text(cfg)) == cfg


def test_config_parse_types_and_comments():
    got = parse_config_text("# comment\n\nepochs = 9\nuse_gda = off\nalpha=0.25\n")
    assert got == {"epochs": 9, "use_gda": False, "alpha": 0.25}


def test_config_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("epochs=1\nnot a pair\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("momentum=0.9")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config_text("use_gda=maybe")
    with pytest.raises(ConfigError, match="int"):
        parse_config_text("epochs=2.5")


def test_config_precedence_file_then_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("epochs=5\nlearning_rate=0.01\n")
    cfg = load_config(p, overrides={"epochs": 11})
    assert cfg.epochs == 11 and cfg.learning_rate == 0.01
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(neighbor_R=0)


# ---------------------------------------------------------------------------
# initialization


def test_init_is_deterministic_per_seed():
    a = tr.init_params(6, 2, seed=3)
    b = tr.init_params(6, 2, seed=3)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    c = tr.init_params(6, 2, seed=4)
    assert not np.array_equal(a.gda.Wq.data, c.gda.Wq.data)


def test_init_biases_zero_weights_bounded():
    params = tr.init_params(8, 2, seed=0)
    for name, p in params.named_parameters():
        if name.endswith(".b"):
            np.testing.assert_array_equal(p.data, np.zeros_like(p.data))
        else:
            bound = np.sqrt(6.0 / (p.rows + p.cols))
            assert np.abs(p.data).max() <= bound, name
            assert np.abs(p.data).max() > 0.0


def test_init_variance_matches_fanin_fanout():
    params = tr.init_params(64, 2, seed=1)
    W = params.gda.Wq.data
    want = 2.0 / (64 + 64)
    assert abs(W.var() / want - 1.0) < 0.2


def test_init_rejects_bad_dim():
    with pytest.raises(ContractError):
        tr.init_params(0, 2, seed=0)


# ---------------------------------------------------------------------------
# optimizer


def grads_of_ones_scaled(params, fn):
    for _, p in params.named_parameters():
        p.grad = fn(p)


def test_adam_zero_gradients_leave_params_alone():
    params = tr.init_params(4, 1, seed=0)
    state = tr.AdamState.for_params(params)
    before = [p.data.copy() for _, p in params.named_parameters()]
    grads_of_ones_scaled(params, lambda p: np.zeros_like(p.data))
    tr.adam_step(params, state, tiny_cfg())
    for want, (_, p) in zip(before, params.named_parameters()):
        np.testing.assert_array_equal(p.data, want)
    assert state.step == 1


def test_adam_first_step_is_signed_learning_rate():
    params = tr.init_params(4, 1, seed=0)
    state = tr.AdamState.for_params(params)
    rng = np.random.default_rng(0)
    grads_of_ones_scaled(params, lambda p: rng.uniform(0.5, 2.0, size=p.data.shape)
                         * rng.choice([-1.0, 1.0], size=p.data.shape))
    before = [p.data.copy() for _, p in params.named_parameters()]
    cfg = tiny_cfg(learning_rate=0.05)
    tr.adam_step(params, state, cfg)
    for prev, (_, p) in zip(before, params.named_parameters()):
        step = prev - p.data
        np.testing.assert_allclose(step, 0.05 * np.sign(p.grad), rtol=1e-6)


def test_adam_decay_applies_after_gradient_step():
    params = tr.init_params(2, 1, seed=0)
    state = tr.AdamState.for_params(params)
    grads_of_ones_scaled(params, lambda p: np.ones_like(p.data))
    cfg = tiny_cfg(learning_rate=0.1, weight_decay=0.5)
    before = [p.data.copy() for _, p in params.named_parameters()]
    tr.adam_step(params, state, cfg)
    for prev, (_, p) in zip(before, params.named_parameters()):
        g = np.ones_like(prev)
        stepped = prev - 0.1 * g / (np.abs(g) + tr.ADAM_EPS)
        want = stepped - 0.1 * 0.5 * stepped  # decay sees the updated value
        np.testing.assert_allclose(p.data, want, rtol=1e-12)


def test_adam_requires_populated_gradients():
    params = tr.init_params(3, 1, seed=0)
    state = tr.AdamState.for_params(params)
    with pytest.raises(ContractError, match="gradient"):
        tr.adam_step(params, state, tiny_cfg())


def test_adam_state_shape_mismatch():
    params = tr.init_params(3, 1, seed=0)
    state = tr.AdamState.for_params(params)
    state.m.pop()
    grads_of_ones_scaled(params, lambda p: np.ones_like(p.data))
    with pytest.raises(ContractError, match="state"):
        tr.adam_step(params, state, tiny_cfg())


def test_adam_drives_quadratic_to_zero():
    # every entry independently minimizes x^2; gradients fed by hand
    params = tr.init_params(4, 1, seed=5)
    state = tr.AdamState.for_params(params)
    cfg = tiny_cfg(learning_rate=1e-2)
    for _ in range(500):
        grads_of_ones_scaled(params, lambda p: 2.0 * p.data)
        tr.adam_step(params, state, cfg)
    for name, p in params.named_parameters():
        assert np.abs(p.data).max() < 0.1, name


# ---------------------------------------------------------------------------
# training loop


def test_train_epoch_accounting_and_history():
    videos = tiny_videos()
    cfg = tiny_cfg(epochs=3)
    result = tr.train(videos, cfg)
    assert result.epochs_run == 3
    assert len(result.history) == 3
    assert set(result.part_history) == {"cls", "repel", "recon"}
    assert all(len(v) == 3 for v in result.part_history.values())
    assert all(np.isfinite(result.history))


def test_train_unsupervised_history_has_no_cls():
    result = tr.train(tiny_videos(), tiny_cfg(supervised=False))
    assert set(result.part_history) == {"repel", "recon"}


def test_train_is_deterministic():
    videos = tiny_videos()
    a = tr.train(videos, tiny_cfg(epochs=2))
    b = tr.train(videos, tiny_cfg(epochs=2))
    assert a.history == b.history
    for (_, pa), (_, pb) in zip(a.params.named_parameters(), b.params.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_train_loss_decreases_on_easy_data():
    videos = tiny_videos(n=2, T=12, d=4)
    result = tr.train(videos, tiny_cfg(epochs=25, learning_rate=3e-3))
    assert result.history[-1] < result.history[0]


def test_train_rejects_empty_and_mixed_dims():
    with pytest.raises(ContractError, match="empty"):
        tr.train([], tiny_cfg())
    vids = tiny_videos(n=2, d=4) + tiny_videos(n=1, d=6)
    with pytest.raises(ContractError, match="dim"):
        tr.train(vids, tiny_cfg())


def test_train_supervised_requires_labels():
    videos = tiny_videos(n=2)
    videos[1].gt_binary = None
    with pytest.raises(ContractError, match=videos[1].id):
        tr.train(videos, tiny_cfg(supervised=True))


class _ProbedRecord(VideoRecord):
    reads: list

    def __getattribute__(self, name):
        if name == "gt_binary":
            object.__getattribute__(self, "reads").append(name)
        return object.__getattribute__(self, name)


def probe_video(rec: VideoRecord) -> _ProbedRecord:
    probed = _ProbedRecord(id=rec.id, features=rec.features, gt_scores=rec.gt_scores,
                           gt_binary=rec.gt_binary, user_summaries=rec.user_summaries,
                           change_points=rec.change_points, picks=rec.picks,
                           corpus_tag=rec.corpus_tag)
    object.__setattr__(probed, "reads", [])
    return probed


def test_unsupervised_training_never_touches_labels():
    videos = [probe_video(v) for v in tiny_videos(n=2)]
    tr.train(videos, tiny_cfg(supervised=False))
    assert all(v.reads == [] for v in videos)
    # sanity: the probe does fire on supervised runs
    tr.train(videos, tiny_cfg(supervised=True))
    assert all(len(v.reads) > 0 for v in videos)


def test_zero_weights_match_pure_classification_run():
    """alpha=beta=0 must reproduce, bit for bit, an optimizer run whose
    graph contains only the classification loss."""
    videos = tiny_videos(n=2, T=8, d=4)
    cfg = tiny_cfg(alpha=0.0, beta=0.0, epochs=2, learning_rate=1e-3,
                   weight_decay=1e-4)
    full = tr.train(videos, cfg)

    params = tr.init_params(4, cfg.neighbor_R, cfg.seed, cfg)
    state = tr.AdamState.for_params(params)
    order = np.random.default_rng(cfg.seed).permutation(len(videos))
    feats = [Matrix(np.asarray(v.features, dtype=np.float64)) for v in videos]
    labels = [np.asarray(v.gt_binary, dtype=np.float64) for v in videos]
    for _ in range(cfg.epochs):
        for i in order:
            params.zero_grads()
            tape = Tape()
            out = forward_scores(feats[i], params, tape)
            loss = hd.bce_loss(out.scores, labels[i], tape)
            ag.backward(loss, tape)
            for _, p in params.named_parameters():
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            tr.adam_step(params, state, cfg)

    for (_, pa), (_, pb) in zip(full.params.named_parameters(), params.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_early_stop_halts_on_flat_loss():
    videos = tiny_videos(n=2)
    cfg = tiny_cfg(learning_rate=1e-12, epochs=50, early_stop=True, patience=3,
                   min_delta=1e-5)
    result = tr.train(videos, cfg)
    assert result.epochs_run == 4  # first epoch sets the best, then 3 stale


# ---------------------------------------------------------------------------
# checkpoints


def trained_state(tmp_path):
    videos = tiny_videos(n=2, T=8, d=4)
    cfg = tiny_cfg(epochs=1)
    result = tr.train(videos, cfg)
    params = result.params
    state = tr.AdamState.for_params(params)
    state.step = 7
    rng = np.random.default_rng(0)
    state.m = [rng.normal(size=a.shape) for a in state.m]
    state.v = [rng.uniform(size=a.shape) for a in state.v]
    path = tmp_path / "run.ckpt"
    tr.save_checkpoint(path, params, state, cfg, epoch=13)
    return path, params, state, cfg


def test_checkpoint_round_trip(tmp_path):
    path, params, state, cfg = trained_state(tmp_path)
    got_params, got_state, got_cfg, got_epoch = tr.load_checkpoint(path)
    assert got_epoch == 13 and got_cfg == cfg and got_state.step == 7
    for (na, pa), (nb, pb) in zip(params.named_parameters(), got_params.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    for a, b in zip(state.m, got_state.m):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(state.v, got_state.v):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_save_load_save_byte_stable(tmp_path):
    path, *_ = trained_state(tmp_path)
    params, state, cfg, epoch = tr.load_checkpoint(path)
    path2 = tmp_path / "again.ckpt"
    tr.save_checkpoint(path2, params, state, cfg, epoch)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_truncation_names_the_piece(tmp_path):
    path, *_ = trained_state(tmp_path)
    blob = path.read_bytes()
    short = tmp_path / "short.ckpt"
    short.write_bytes(blob[:2])
    with pytest.raises(ContractError, match="magic"):
        tr.load_checkpoint(short)
    short.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(ContractError, match="truncated"):
        tr.load_checkpoint(short)
    longer = tmp_path / "long.ckpt"
    longer.write_bytes(blob + b"xx")
    with pytest.raises(ContractError, match="trailing"):
        tr.load_checkpoint(longer)


def test_checkpoint_rejects_wrong_magic_and_version(tmp_path):
    path, *_ = trained_state(tmp_path)
    blob = bytearray(path.read_bytes())
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"WHAT" + bytes(blob[4:]))
    with pytest.raises(ContractError, match="magic"):
        tr.load_checkpoint(bad)
    blob[4] = 42
    bad.write_bytes(bytes(blob))
    with pytest.raises(ContractError, match="version"):
        tr.load_checkpoint(bad)


def test_checkpoint_resume_matches_uninterrupted_run(tmp_path):
    """Training N epochs straight equals train, checkpoint, reload, continue."""
    videos = tiny_videos(n=2, T=8, d=4)
    cfg = tiny_cfg(epochs=4, learning_rate=1e-3)
    straight = tr.train(videos, cfg)

    # manual loop so the optimizer state can be captured mid-run
    params = tr.init_params(4, cfg.neighbor_R, cfg.seed, cfg)
    state = tr.AdamState.for_params(params)
    order = np.random.default_rng(cfg.seed).permutation(len(videos))
    feats = [Matrix(np.asarray(v.features, dtype=np.float64)) for v in videos]
    labels = [np.asarray(v.gt_binary, dtype=np.float64) for v in videos]
    weights = hd.LossWeights(alpha=cfg.alpha, beta=cfg.beta, supervised=True)

    def one_epoch(params, state):
        from divsum.model import forward_loss
        for i in order:
            params.zero_grads()
            tape = Tape()
            out = forward_loss(feats[i], params, weights, labels[i], tape)
            ag.backward(out.total, tape)
            tr.adam_step(params, state, cfg)

    for _ in range(2):
        one_epoch(params, state)
    path = tmp_path / "mid.ckpt"
    tr.save_checkpoint(path, params, state, cfg, epoch=2)
    params2, state2, cfg2, epoch2 = tr.load_checkpoint(path)
    assert epoch2 == 2
    for _ in range(2):
        one_epoch(params2, state2)

    for (_, pa), (_, pb) in zip(straight.params.named_parameters(),
                                params2.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
