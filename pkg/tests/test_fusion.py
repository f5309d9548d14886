import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mman import tensor as T
from mman.config import Hyperparams, ModelConfig
from mman.dataset import extract_all
from mman.encoders import EncoderOutput
from mman.fusion import (
    MODALITIES,
    NoModalityEnabled,
    attend_sigmoid,
    attend_softmax,
    fuse,
    init_attention,
    init_fusion,
    pool,
)
from mman.model import Model, Vocabularies, attention_report
from mman.optim import ParameterSet
from mman.synthetic import synthetic_corpus


def attention_params(H, modalities=MODALITIES, seed=0):
    ps = ParameterSet(np.float64)
    rng = np.random.default_rng(seed)
    for m in modalities:
        init_attention(ps, m, H, rng)
    init_fusion(ps, H, H, rng)
    return ps


def output(states, mask=None):
    states = np.asarray(states, dtype=np.float64)
    if mask is None:
        mask = np.ones(states.shape[:2], dtype=bool)
    return EncoderOutput(T.Tensor(states), T.Tensor(states[:, -1]), np.asarray(mask, dtype=bool))


def test_identical_states_give_uniform_weights():
    ps = attention_params(3)
    out = output(np.tile([[0.3, -0.2, 0.9]], (1, 4, 1)))
    alpha = attend_softmax(out, ps, "tok").data
    assert np.allclose(alpha, 0.25, atol=1e-15)


def test_masked_equal_scores():
    ps = attention_params(2)
    out = output(np.ones((1, 3, 2)), mask=[[True, True, False]])
    alpha = attend_softmax(out, ps, "ast").data
    assert np.allclose(alpha, [[0.5, 0.5, 0.0]]) and alpha[0, 2] == 0.0


def scoring_params(H):
    """Attention whose score of state ``h`` is ``h[0]`` (f = identity, u = e_0)."""
    ps = ParameterSet(np.float64)
    for m in MODALITIES:
        ps.add(f"attn.{m}.f.W", np.eye(H))
        ps.add(f"attn.{m}.f.b", np.zeros(H))
        u = np.zeros(H)
        u[0] = 1.0
        ps.add(f"attn.{m}.u", u)
    return ps


def test_softmax_of_log_two():
    ps = scoring_params(2)
    out = output([[[np.log(2.0), 0.0], [0.0, 0.0]]])
    assert np.allclose(attend_softmax(out, ps, "tok").data, [[2 / 3, 1 / 3]], atol=1e-15)


def test_sigmoid_points_and_monotonicity():
    ps = scoring_params(2)
    out = output([[[0.0, 1.0], [np.log(3.0), 0.0], [-2.0, 0.0]]])
    alpha = attend_sigmoid(out, ps, "cfg").data[0]
    assert alpha[0] == 0.5
    assert alpha[1] == pytest.approx(0.75, abs=1e-15)
    assert alpha[1] > alpha[0] > alpha[2]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.floats(-20, 20), st.integers(0, 2**31 - 1))
def test_attention_invariants(n, H, shift, seed):
    rng = np.random.default_rng(seed)
    ps = attention_params(H, seed=seed)
    states = rng.normal(size=(2, n, H))
    mask = rng.random((2, n)) < 0.7
    mask[:, 0] = True
    out = output(states, mask)
    alpha = attend_softmax(out, ps, "tok").data
    assert np.all(np.abs(alpha.sum(axis=1) - 1.0) < 1e-6)
    assert np.all(alpha[~mask] == 0)
    # a constant added to every score: shift the bias along u
    u = ps["attn.tok.u"].data
    shifted = ps.copy()
    shifted.set("attn.tok.f.b", ps["attn.tok.f.b"].data + shift * u / (u @ u))
    alpha2 = attend_softmax(out, shifted, "tok").data
    assert np.max(np.abs(alpha - alpha2)) < 1e-10
    sig = attend_sigmoid(out, ps, "cfg").data
    assert np.all((sig[mask] > 0) & (sig[mask] < 1))


def test_zero_attended_vectors_give_zero_code():
    ps = attention_params(3)
    outs = {m: output(np.zeros((1, 2, 3))) for m in MODALITIES}
    assert np.array_equal(fuse(outs, ps).code.data, np.zeros((1, 3)))


def test_identity_blocks_sum_attended_vectors():
    H = 3
    ps = attention_params(H, seed=4)
    ps.set("fusion.W", np.concatenate([np.eye(H)] * 3, axis=0))
    rng = np.random.default_rng(4)
    outs = {m: output(rng.normal(size=(2, 3, H))) for m in MODALITIES}
    result = fuse(outs, ps)
    total = sum(result.pooled[m].data for m in MODALITIES)
    assert np.allclose(result.code.data, total, atol=1e-14)


def brute_force_fusion(ps, states, masks, H):
    """Term-by-term weighted sums and matrix product."""
    x = []
    for m in MODALITIES:
        fW, fb, u = ps[f"attn.{m}.f.W"].data, ps[f"attn.{m}.f.b"].data, ps[f"attn.{m}.u"].data
        hs, mask = states[m][0], masks[m][0]
        scores = []
        for h in hs:
            proj = [sum(h[k] * fW[k, j] for k in range(H)) + fb[j] for j in range(H)]
            scores.append(sum(p * uu for p, uu in zip(proj, u)))
        if m == "cfg":
            weights = [1 / (1 + np.exp(-s)) if ok else 0.0 for s, ok in zip(scores, mask)]
        else:
            ex = [np.exp(s) if ok else 0.0 for s, ok in zip(scores, mask)]
            weights = [e / sum(ex) for e in ex]
        x.extend(sum(w * h[j] for w, h in zip(weights, hs)) for j in range(H))
    Wf = ps["fusion.W"].data
    return np.array([sum(x[i] * Wf[i, j] for i in range(len(x))) for j in range(Wf.shape[1])])


@pytest.mark.parametrize("seed", range(10))
def test_fusion_matches_term_by_term_evaluation(seed):
    rng = np.random.default_rng([5, seed])
    H = int(rng.integers(1, 5))
    ps = attention_params(H, seed=seed)
    states, masks, outs = {}, {}, {}
    for m in MODALITIES:
        n = int(rng.integers(1, 4))
        states[m] = rng.normal(size=(1, n, H))
        masks[m] = np.ones((1, n), dtype=bool)
        outs[m] = output(states[m], masks[m])
    got = fuse(outs, ps).code.data[0]
    assert np.allclose(got, brute_force_fusion(ps, states, masks, H), atol=1e-12)


def test_single_modality_with_identity_block():
    H = 2
    ps = attention_params(H, seed=1)
    W = np.zeros((3 * H, H))
    W[H : 2 * H] = np.eye(H)
    ps.set("fusion.W", W)
    outs = {"ast": output(np.random.default_rng(1).normal(size=(1, 3, H)))}
    result = fuse(outs, ps, enabled=("ast",))
    assert np.allclose(result.code.data, result.pooled["ast"].data, atol=1e-15)


def test_fusion_is_linear_in_each_block():
    H = 3
    ps = attention_params(H, seed=2)
    rng = np.random.default_rng(2)
    outs = {m: output(rng.normal(size=(1, 2, H))) for m in MODALITIES}
    # the summary path feeds the attended vector straight into the linear layer
    base = fuse(outs, ps, attention=False)
    v = base.pooled["tok"].data
    W = ps["fusion.W"].data
    lam = 2.5
    rest = base.code.data - v @ W[:H]
    scaled = {**outs, "tok": output(outs["tok"].states.data * lam)}
    got = fuse(scaled, ps, attention=False).code.data
    assert np.allclose(got, lam * (v @ W[:H]) + rest, atol=1e-12)


def test_one_hot_on_last_token_matches_summary_path():
    H = 2
    ps = attention_params(H, modalities=("tok",), seed=3)
    out = output(np.random.default_rng(3).normal(size=(1, 3, H)))
    pooled = pool(out, T.Tensor([[0.0, 0.0, 1.0]]))
    assert np.array_equal(pooled.data, out.summary.data)
    no_att = fuse({"tok": out}, ps, enabled=("tok",), attention=False)
    assert np.allclose(no_att.code.data, pooled.data @ ps["fusion.W"].data[:H], atol=1e-15)


def test_no_modality_rejected():
    with pytest.raises(NoModalityEnabled):
        fuse({}, attention_params(2), enabled=())


@pytest.fixture(scope="module")
def small_model():
    examples = extract_all(synthetic_corpus(8)).examples
    cfg = ModelConfig(Hyperparams(embed_dim=4, hidden_dim=4, common_dim=4, rounds=2, precision="float64"))
    return Model(cfg, Vocabularies.build(examples, cfg)), examples


def test_attention_report_shape_and_ranges(small_model):
    model, examples = small_model
    ex = examples[0]
    report = attention_report(ex, model)
    assert [l for l, _ in report.weights["tok"]] == ex.tokens
    assert len(report.weights["ast"]) == len(ex.ast.nodes)
    assert len(report.weights["cfg"]) == len(ex.cfg.vertices)
    for m in ("tok", "ast"):
        assert abs(sum(w for _, w in report.weights[m]) - 1.0) < 1e-6
    assert all(0 < w < 1 for _, w in report.weights["cfg"])
    assert len(list(report.records())) == len(ex.tokens) + len(ex.ast.nodes) + len(ex.cfg.vertices)


def test_attention_report_zero_model_is_uniform(small_model):
    model, _ = small_model
    zero = Model(model.config, model.vocabs, model.params.copy())
    for name in zero.params.names():
        zero.params.set(name, np.zeros_like(zero.params[name].data))
    report = attention_report("int get_x() { return x; }", zero)
    tok = report.weights["tok"]
    assert [label for label, _ in tok] == ["get", "x", "return", "x"]
    assert all(w == pytest.approx(0.25, abs=1e-15) for _, w in tok)
