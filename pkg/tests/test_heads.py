import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from divsum import autograd as ag
from divsum import heads as hd
from divsum import model as mdl
from divsum.attention import GdaParams, LcaParams
from divsum.autograd import ContractError, Matrix, NumericError, ShapeError, Tape

from . import oracles
from .oracles import finite_difference_grads


def affine(rng, rows, cols):
    return hd.Affine(
        W=Matrix(rng.uniform(-0.5, 0.5, size=(rows, cols))),
        b=Matrix(rng.uniform(-0.5, 0.5, size=(1, cols))),
    )


def make_heads(rng, d, recon_final_sigmoid=False):
    return hd.HeadParams(
        score1=affine(rng, d, d),
        score2=affine(rng, d, 1),
        embed=affine(rng, d, d),
        recon1=affine(rng, d, d),
        recon2=affine(rng, d, d),
        recon_final_sigmoid=recon_final_sigmoid,
    )


def make_model(rng, d, R, sim="l2", variant="contextual"):
    sq = lambda: Matrix(rng.uniform(-0.5, 0.5, size=(d, d)))
    return mdl.ModelParams(
        gda=GdaParams(Wq=sq(), Wk=sq(), Wv=sq(), sim_kind=sim),
        lca=LcaParams(
            Wq2=sq(), Wk2=sq(), Wv2=sq(),
            rel_pos=Matrix(rng.uniform(-0.5, 0.5, size=(2 * R + 1, d))),
            neighbor_R=R, variant=variant,
        ),
        heads=make_heads(rng, d),
    )


# ---------------------------------------------------------------------------
# score head


def test_zero_head_scores_half():
    d = 4
    zeros = lambda r, c: hd.Affine(W=Matrix.zeros(r, c), b=Matrix.zeros(1, c))
    h = hd.HeadParams(
        score1=zeros(d, d), score2=zeros(d, 1), embed=zeros(d, d),
        recon1=zeros(d, d), recon2=zeros(d, d),
    )
    y = hd.score_frames(Matrix(np.random.default_rng(0).uniform(-1, 1, (5, d))), h)
    np.testing.assert_array_equal(y.data, np.full((5, 1), 0.5))


def test_scores_strictly_inside_unit_interval():
    rng = np.random.default_rng(1)
    h = make_heads(rng, 6)
    y = hd.score_frames(Matrix(rng.uniform(-3, 3, (20, 6))), h).data
    assert np.all(y > 0.0) and np.all(y < 1.0)


def test_single_row_matches_batched_row():
    rng = np.random.default_rng(2)
    h = make_heads(rng, 5)
    X = rng.uniform(-1, 1, (4, 5))
    batched = hd.score_frames(Matrix(X), h).data
    single = hd.score_frames(Matrix(X[2:3]), h).data
    np.testing.assert_allclose(single, batched[2:3], atol=1e-12)


def test_score_head_grads_match_fd():
    rng = np.random.default_rng(3)
    d = 5
    h = make_heads(rng, d)
    X = Matrix(rng.uniform(-1, 1, (6, d)))
    params = [h.score1.W, h.score1.b, h.score2.W, h.score2.b]

    def run():
        tape = Tape()
        return ag.sum_all(hd.score_frames(X, h, tape), tape), tape

    for m in params:
        m.zero_grad()
    loss, tape = run()
    ag.backward(loss, tape)
    numeric = finite_difference_grads(lambda: run()[0].item(), params)
    for m, num in zip(params, numeric):
        np.testing.assert_allclose(m.grad, num, rtol=1e-4, atol=1e-6)


def test_head_params_validate_dimension_chain():
    rng = np.random.default_rng(4)
    with pytest.raises(ShapeError):
        hd.HeadParams(
            score1=affine(rng, 4, 4),
            score2=affine(rng, 4, 2),  # must end in a single score column
            embed=affine(rng, 4, 4),
            recon1=affine(rng, 4, 4),
            recon2=affine(rng, 4, 4),
        )


# ---------------------------------------------------------------------------
# classification loss


def test_bce_at_half_is_ln2():
    y = Matrix.column([0.5, 0.5, 0.5])
    for gt in ([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]):
        assert hd.bce_loss(y, gt).item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_bce_perfect_prediction_is_tiny():
    y = Matrix.column([1.0, 0.0, 1.0])
    assert hd.bce_loss(y, [1.0, 0.0, 1.0]).item() <= 1e-6


def test_bce_matches_loop_oracle():
    rng = np.random.default_rng(5)
    y = rng.uniform(0.01, 0.99, size=12)
    gt = rng.integers(0, 2, size=12).astype(float)
    got = hd.bce_loss(Matrix.column(y), gt).item()
    assert got == pytest.approx(oracles.loop_bce(y, gt), abs=1e-12)


def test_bce_length_mismatch():
    with pytest.raises(ShapeError):
        hd.bce_loss(Matrix.column([0.5, 0.5]), [1.0])


def test_bce_decreases_toward_target():
    gt = [1.0, 0.0, 1.0, 0.0]
    worse = hd.bce_loss(Matrix.column([0.6, 0.4, 0.6, 0.4]), gt).item()
    better = hd.bce_loss(Matrix.column([0.8, 0.2, 0.8, 0.2]), gt).item()
    assert better < worse


def test_bce_grads_match_fd():
    rng = np.random.default_rng(6)
    y = Matrix(rng.uniform(0.05, 0.95, size=(8, 1)))
    gt = rng.integers(0, 2, size=8).astype(float)

    def run():
        tape = Tape()
        return hd.bce_loss(y, gt, tape), tape

    y.zero_grad()
    loss, tape = run()
    ag.backward(loss, tape)
    numeric = finite_difference_grads(lambda: run()[0].item(), [y])
    np.testing.assert_allclose(y.grad, numeric[0], rtol=1e-4, atol=1e-6)


# ---------------------------------------------------------------------------
# repelling loss


def test_repelling_identical_rows_is_one():
    E = Matrix(np.tile([[0.3, -0.7, 0.2]], (4, 1)))
    assert hd.repelling_loss(E).item() == pytest.approx(1.0, abs=1e-12)


def test_repelling_orthogonal_pair_is_zero():
    E = Matrix([[1.0, 0.0], [0.0, 2.0]])
    assert hd.repelling_loss(E).item() == pytest.approx(0.0, abs=1e-12)


def test_repelling_matches_double_loop():
    rng = np.random.default_rng(7)
    E = rng.uniform(-1, 1, size=(5, 6))
    got = hd.repelling_loss(Matrix(E)).item()
    assert got == pytest.approx(oracles.loop_repelling(E), abs=1e-12)


def test_repelling_contract_errors():
    with pytest.raises(ContractError):
        hd.repelling_loss(Matrix([[1.0, 2.0]]))
    with pytest.raises(NumericError):
        hd.repelling_loss(Matrix([[1.0, 0.0], [0.0, 0.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(2, 8), cols=st.integers(1, 6))
def test_repelling_stays_in_unit_range(seed, rows, cols):
    rng = np.random.default_rng(seed)
    E = rng.uniform(-1, 1, size=(rows, cols))
    E[np.sum(E * E, axis=1) == 0.0] = 1.0  # astronomically unlikely, but the contract forbids it
    val = hd.repelling_loss(Matrix(E)).item()
    assert -1.0 - 1e-9 <= val <= 1.0 + 1e-9


def test_repelling_grads_match_fd():
    rng = np.random.default_rng(8)
    E = Matrix(rng.uniform(0.2, 1.0, size=(5, 4)))

    def run():
        tape = Tape()
        return hd.repelling_loss(E, tape), tape

    E.zero_grad()
    loss, tape = run()
    ag.backward(loss, tape)
    numeric = finite_difference_grads(lambda: run()[0].item(), [E])
    np.testing.assert_allclose(E.grad, numeric[0], rtol=1e-4, atol=1e-6)


# ---------------------------------------------------------------------------
# reconstruction loss


def test_reconstruction_zero_at_identity():
    X = Matrix(np.random.default_rng(9).uniform(-1, 1, (4, 3)))
    assert hd.reconstruction_loss(X, Matrix(X.data.copy())).item() == 0.0


def test_reconstruction_three_four_five():
    assert hd.reconstruction_loss(Matrix([[3.0, 4.0]]), Matrix([[0.0, 0.0]])).item() == \
        pytest.approx(5.0, abs=1e-12)


def test_reconstruction_matches_loop_oracle():
    rng = np.random.default_rng(10)
    X = rng.uniform(-1, 1, (6, 5))
    Xr = rng.uniform(-1, 1, (6, 5))
    got = hd.reconstruction_loss(Matrix(X), Matrix(Xr)).item()
    assert got == pytest.approx(oracles.loop_reconstruction(X, Xr), abs=1e-12)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ShapeError):
        hd.reconstruction_loss(Matrix(np.zeros((2, 3))), Matrix(np.zeros((3, 2))))


def test_reconstruction_grads_match_fd():
    rng = np.random.default_rng(11)
    X = Matrix(rng.uniform(-1, 1, (5, 4)))
    Xr = Matrix(rng.uniform(-1, 1, (5, 4)))

    def run():
        tape = Tape()
        return hd.reconstruction_loss(X, Xr, tape), tape

    Xr.zero_grad()
    loss, tape = run()
    ag.backward(loss, tape)
    numeric = finite_difference_grads(lambda: run()[0].item(), [Xr])
    np.testing.assert_allclose(Xr.grad, numeric[0], rtol=1e-4, atol=1e-6)


# ---------------------------------------------------------------------------
# combined objective


def test_total_loss_weights():
    parts = hd.LossParts(cls=Matrix.scalar(7.0), repel=Matrix.scalar(2.0),
                         recon=Matrix.scalar(3.0))
    only_cls = hd.total_loss(parts, hd.LossWeights(alpha=0.0, beta=0.0, supervised=True))
    assert only_cls.item() == pytest.approx(7.0)
    unsup = hd.total_loss(parts, hd.LossWeights(alpha=0.1, beta=1.0, supervised=False))
    assert unsup.item() == pytest.approx(3.2, abs=1e-12)


def test_total_loss_supervised_requires_cls():
    parts = hd.LossParts(cls=None, repel=Matrix.scalar(1.0), recon=Matrix.scalar(1.0))
    with pytest.raises(ContractError):
        hd.total_loss(parts, hd.LossWeights(supervised=True))


def test_loss_weights_must_be_nonnegative():
    with pytest.raises(ContractError):
        hd.LossWeights(alpha=-0.1)


# ---------------------------------------------------------------------------
# assembled model


def test_full_forward_loss_grads_match_fd():
    rng = np.random.default_rng(12)
    T, d, R = 4, 4, 1
    params = make_model(rng, d, R)
    X = Matrix(rng.uniform(-1, 1, (T, d)))
    gt = rng.integers(0, 2, size=T).astype(float)
    weights = hd.LossWeights(alpha=0.1, beta=1.0, supervised=True)
    mats = [p for _, p in params.named_parameters()]

    def run():
        tape = Tape()
        out = mdl.forward_loss(X, params, weights, gt, tape)
        return out.total, tape

    params.zero_grads()
    loss, tape = run()
    ag.backward(loss, tape)
    numeric = finite_difference_grads(lambda: run()[0].item(), mats)
    for (name, m), num in zip(params.named_parameters(), numeric):
        np.testing.assert_allclose(m.grad, num, rtol=1e-4, atol=1e-6,
                                   err_msg=f"gradient mismatch for {name}")


def test_gradient_reaches_every_head():
    rng = np.random.default_rng(13)
    params = make_model(rng, 4, 1)
    X = Matrix(rng.uniform(-1, 1, (5, 4)))
    gt = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    params.zero_grads()
    tape = Tape()
    out = mdl.forward_loss(X, params, hd.LossWeights(supervised=True), gt, tape)
    ag.backward(out.total, tape)
    for name, m in params.named_parameters():
        assert np.any(m.grad != 0.0), f"no gradient reached {name}"


def test_forward_scores_ablation_toggles():
    rng = np.random.default_rng(14)
    params = make_model(rng, 4, 1)
    X = Matrix(rng.uniform(-1, 1, (5, 4)))
    both = mdl.forward_scores(X, params)
    no_gda = mdl.forward_scores(X, params, use_gda=False)
    no_lca = mdl.forward_scores(X, params, use_lca=False)
    neither = mdl.forward_scores(X, params, use_gda=False, use_lca=False)
    assert no_gda.global_attention is None and no_gda.local_attention is not None
    np.testing.assert_allclose(
        no_gda.fused.data, X.data + no_gda.local_attention.features.data, atol=1e-12
    )
    np.testing.assert_allclose(
        no_lca.fused.data, X.data + no_lca.global_attention.features.data, atol=1e-12
    )
    np.testing.assert_array_equal(neither.fused.data, X.data)
    assert not np.allclose(both.fused.data, neither.fused.data)


def test_supervised_forward_requires_labels():
    rng = np.random.default_rng(15)
    params = make_model(rng, 4, 1)
    X = Matrix(rng.uniform(-1, 1, (4, 4)))
    with pytest.raises(ContractError):
        mdl.forward_loss(X, params, hd.LossWeights(supervised=True), None)


def test_unsupervised_forward_needs_no_labels():
    rng = np.random.default_rng(16)
    params = make_model(rng, 4, 1)
    X = Matrix(rng.uniform(-1, 1, (4, 4)))
    out = mdl.forward_loss(X, params, hd.LossWeights(supervised=False), None)
    assert out.parts.cls is None
    assert np.isfinite(out.total.item())


def test_named_parameters_are_stable_and_complete():
    rng = np.random.default_rng(17)
    params = make_model(rng, 4, 2)
    names = [n for n, _ in params.named_parameters()]
    assert names == [n for n, _ in params.named_parameters()]
    assert len(names) == len(set(names)) == 17
    assert "lca.rel_pos" in names and "heads.recon2.b" in names
