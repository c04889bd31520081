import numpy as np
import pytest

from semvec import ndiff
from semvec.expr import Domain, parse, print_infix
from semvec.models import (
    EqNet,
    ForwardDag,
    GruEncoder,
    ModelError,
    TfIdf,
    TreeNN,
    load_model,
    new_model,
)

BOOL_OPS = ("and", "or", "not", "xor", "implies")
VARS = ("a", "b", "c")


def b(text):
    return parse(text, Domain.BOOLEAN)


def small_eqnet(seed=0, **kw):
    kw.setdefault("dim", 8)
    kw.setdefault("hidden", 4)
    kw.setdefault("code_dim", 4)
    return EqNet(Domain.BOOLEAN, BOOL_OPS, VARS, seed=seed, **kw)


def test_eqnet_outputs_unit_norm():
    model = small_eqnet()
    exprs = [b("a"), b("(! a)"), b("((a & b) | (! c))"), b("((a ^ b) => (b ^ a))")]
    vecs = model.encode_many(exprs)
    assert vecs.shape == (4, 8)
    np.testing.assert_allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-5)


def test_eqnet_argument_order_matters():
    model = small_eqnet()
    va, vb = model.encode(b("(a => b)")), model.encode(b("(b => a)"))
    assert np.linalg.norm(va - vb) > 1e-4


def test_encode_many_matches_single_encoding():
    model = small_eqnet()
    exprs = [b("((a & b) | c)"), b("(! (a ^ c))"), b("a")]
    batch = model.encode_many(exprs)
    for row, e in zip(batch, exprs):
        np.testing.assert_allclose(row, model.encode(e), atol=1e-6)


def test_shared_subtrees_share_columns():
    # the same subtree appearing in several roots is computed once
    model = small_eqnet()
    e1, e2 = b("((a & b) | c)"), b("((a & b) ^ c)")
    dag = ForwardDag([e1, e2], model)
    assert dag.index[b("(a & b)")] < dag.index[e1]
    assert len(dag.nodes) == len({print_infix(n) for n in dag.nodes})
    batch = model.encode_many([e1, e2, e1])
    np.testing.assert_array_equal(batch[0], batch[2])


def test_forward_dag_children_precede_parents():
    model = small_eqnet()
    dag = ForwardDag([b("((a & b) | (! (a & b)))")], model)
    for e in dag.nodes:
        for c in e.children:
            assert dag.index[c] < dag.index[e]


def test_forward_dag_rejects_foreign_symbols():
    model = EqNet(Domain.BOOLEAN, ("and",), ("a", "b"), dim=4, hidden=2, code_dim=2)
    with pytest.raises(ModelError):
        ForwardDag([b("(a | b)")], model)
    with pytest.raises(ModelError):
        ForwardDag([b("c")], model)


def test_eqnet_residual_path_alone_still_works():
    # zeroing the hidden path leaves the linear residual term
    model = small_eqnet()
    model.store["Wo1:and"].data[:] = 0.0
    v = model.encode(b("(a & b)"))
    np.testing.assert_allclose(np.linalg.norm(v), 1.0, atol=1e-5)
    x = np.concatenate([model.encode(b("a")), model.encode(b("b"))])
    want = model.store["Wo0:and"].data @ x
    np.testing.assert_allclose(v, want / np.linalg.norm(want), atol=1e-5)


def test_ae_loss_bounded_below():
    # per column the loss is -(x̃ᵀx + r̃ᵀr) ≥ -(k+1) for unit-norm children
    model = small_eqnet()
    rng = np.random.default_rng(0)
    for opname, k in [("not", 1), ("and", 2)]:
        raw = rng.standard_normal((8 * k, 200))
        cols = raw.reshape(8, k * 200)
        cols /= np.linalg.norm(cols, axis=0)
        x = ndiff.constant(cols.reshape(8 * k, 200))
        parent = model.combine_block(opname, x, train=False, rng=None)
        loss = model.ae_loss_block(opname, x, parent, rng, train=True)
        assert loss.data.shape == (200,)
        assert (loss.data >= -(k + 1) - 1e-5).all()


def test_ae_loss_reaches_bound_for_exact_inverse():
    # weights built so the bottleneck reproduces a uniform child exactly:
    # the k=1 loss then sits at its lower bound of -2
    model = small_eqnet(kappa=0.0)
    d = model.dim
    x_col = np.ones((d, 1), dtype=np.float32) / np.sqrt(d)
    model.store["We:not"].data[:] = 0.0
    model.store["We:not"].data[0, d:] = 50.0 * x_col[:, 0]
    model.store["Wd"].data[:] = 0.0
    model.store["Wd"].data[:d, 0] = 50.0
    x = ndiff.constant(x_col)
    parent = model.combine_block("not", x, train=False, rng=None)
    loss = model.ae_loss_block("not", x, parent, np.random.default_rng(0), train=False)
    np.testing.assert_allclose(loss.data, [-2.0], atol=1e-5)


def test_eqnet_noise_destroys_information():
    # with kappa ~ 1 the code sees only zeros, so the reconstruction is
    # whatever the decoder makes of tanh(0): loss should be far from -2
    model = small_eqnet(kappa=0.99)
    rng = np.random.default_rng(0)
    x = ndiff.constant(np.ones((8, 1), dtype=np.float32) / np.sqrt(8.0))
    parent = model.combine_block("not", x, train=False, rng=None)
    noisy = model.ae_loss_block("not", x, parent, rng, train=True)
    clean = model.ae_loss_block("not", x, parent, rng, train=False)
    assert noisy.data[0] > -2.0 + 1e-3 or abs(noisy.data[0] - clean.data[0]) > 1e-6


def test_treenn_layers_and_range():
    m1 = TreeNN(Domain.BOOLEAN, BOOL_OPS, VARS, dim=8, layers=1)
    m2 = TreeNN(Domain.BOOLEAN, BOOL_OPS, VARS, dim=8, layers=2, hidden=5)
    for m in (m1, m2):
        v = m.encode(b("((a & b) | c)"))
        assert v.shape == (8,)
        assert (np.abs(v) <= 1.0).all()  # tanh output
    assert "W2:and" in m2.store and "W2:and" not in m1.store
    with pytest.raises(ModelError):
        TreeNN(Domain.BOOLEAN, BOOL_OPS, VARS, layers=3)


def test_gru_step_matches_manual_formula():
    model = GruEncoder(Domain.BOOLEAN, BOOL_OPS, VARS, dim=5, emb_dim=4, seed=3)
    s = model.store
    rng = np.random.default_rng(7)
    x = rng.standard_normal((4, 2)).astype(np.float32)
    h = rng.standard_normal((5, 2)).astype(np.float32)

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    z = sig(s["Wz"].data @ x + s["Uz"].data @ h + s["bz"].data[:, None])
    r = sig(s["Wr"].data @ x + s["Ur"].data @ h + s["br"].data[:, None])
    cand = np.tanh(s["Wh"].data @ x + s["Uh"].data @ (r * h) + s["bh"].data[:, None])
    want = (1 - z) * h + z * cand

    got = model.step(ndiff.constant(x, dtype=np.float32), ndiff.constant(h, dtype=np.float32))
    np.testing.assert_allclose(got.data, want, rtol=1e-5, atol=1e-6)


def test_gru_mixed_length_batching():
    model = GruEncoder(Domain.BOOLEAN, BOOL_OPS, VARS, dim=6, emb_dim=4)
    exprs = [b("a"), b("(a & b)"), b("((a | b) ^ c)"), b("b")]
    batch = model.encode_many(exprs)
    for row, e in zip(batch, exprs):
        np.testing.assert_allclose(row, model.encode(e), atol=1e-6)


def test_gru_is_order_sensitive():
    model = GruEncoder(Domain.BOOLEAN, BOOL_OPS, VARS, dim=6, emb_dim=4)
    assert np.linalg.norm(model.encode(b("(a & b)")) - model.encode(b("(b & a)"))) > 1e-5


def test_gru_rejects_unknown_token():
    model = GruEncoder(Domain.BOOLEAN, ("and",), ("a", "b"), dim=4, emb_dim=3)
    with pytest.raises(ModelError):
        model.token_ids(parse("(a + b)", Domain.POLYNOMIAL))


def test_tfidf_order_blind_and_weighted():
    model = TfIdf(Domain.BOOLEAN, VARS).fit([b("(a & b)"), b("(a | c)"), b("(a & c)")])
    np.testing.assert_array_equal(model.encode(b("(a & b)")), model.encode(b("(b & a)")))
    # idf follows ln((1+N)/(1+df)) + 1 with N=3 docs
    i_and = model.tok_index["&"]
    assert model.idf[i_and] == pytest.approx(np.log(4 / 3) + 1)
    i_xor = model.tok_index["^"]
    assert model.idf[i_xor] == pytest.approx(np.log(4 / 1) + 1)
    # "a" is in every document, the least informative token
    assert model.idf[model.tok_index["a"]] == pytest.approx(np.log(1.0) + 1)


def test_tfidf_unseen_slot_and_roundtrip():
    model = TfIdf(Domain.POLYNOMIAL, ("a",)).fit([parse("(a + a)", Domain.POLYNOMIAL)])
    # '*' is in the domain vocabulary with df=0, so it gets the max idf
    vec = model.encode(parse("(a * a)", Domain.POLYNOMIAL))
    assert vec[model.tok_index["*"]] == pytest.approx(np.log(2.0) + 1)
    assert vec[-1] == 0.0
    # a variable outside the fitted vocabulary lands in the unseen slot
    foreign = model.encode(parse("(a + b)", Domain.POLYNOMIAL))
    assert foreign[-1] == pytest.approx(model.unseen_idf)
    back = TfIdf.from_json(model.to_json())
    np.testing.assert_array_equal(back.encode(parse("(a * a)", Domain.POLYNOMIAL)), vec)
    with pytest.raises(ModelError):
        TfIdf(Domain.BOOLEAN, VARS).encode(b("a"))


def test_attach_classes_and_logits():
    model = small_eqnet()
    rng = np.random.default_rng(0)
    model.attach_classes(["c1", "c2", "c3"], rng, std=0.01)
    reps = ndiff.constant(np.ones((8, 4), dtype=np.float32))
    logits = model.logits_block(reps)
    assert logits.data.shape == (3, 4)
    want = model.store["Q"].data @ reps.data + model.store["b"].data[:, None]
    np.testing.assert_allclose(logits.data, want, rtol=1e-6)


@pytest.mark.parametrize("kind", ["eqnet", "treenn1", "treenn2", "gru"])
def test_checkpoint_round_trip(kind, tmp_path):
    model = new_model(kind, Domain.BOOLEAN, BOOL_OPS, VARS, seed=1, dim=8)
    model.attach_classes(["k0", "k1"], np.random.default_rng(0), std=0.01)
    e = b("((a & b) => c)")
    path = tmp_path / "model.json"
    model.save(str(path))
    back = load_model(str(path))
    assert back.kind == kind
    assert back.classes == ["k0", "k1"]
    np.testing.assert_allclose(back.encode(e), model.encode(e), atol=1e-7)


def test_new_model_rejects_unknown_kind():
    with pytest.raises(ModelError):
        new_model("transformer", Domain.BOOLEAN, BOOL_OPS, VARS)


def test_same_seed_same_vectors():
    v1 = small_eqnet(seed=5).encode(b("(a ^ c)"))
    v2 = small_eqnet(seed=5).encode(b("(a ^ c)"))
    v3 = small_eqnet(seed=6).encode(b("(a ^ c)"))
    np.testing.assert_array_equal(v1, v2)
    assert np.linalg.norm(v1 - v3) > 1e-6


def test_node_vectors_cover_unique_subtrees():
    model = small_eqnet()
    e = b("((a & b) | (a & b))")
    pairs = model.node_vectors(e)
    labels = [print_infix(n) for n, _ in pairs]
    assert labels == ["a", "b", "(a & b)", "((a & b) | (a & b))"]
    root_vec = dict(zip(labels, (v for _, v in pairs)))[print_infix(e)]
    np.testing.assert_allclose(root_vec, model.encode(e), atol=1e-6)
