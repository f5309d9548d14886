import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mman.config import Hyperparams, ModelConfig
from mman.dataset import CodeRecord, extract, extract_all
from mman.model import Model, Vocabularies
from mman.optim import adam_step
from mman.synthetic import synthetic_corpus
from mman.training import (
    CorpusTooSmall,
    TrainingTriple,
    batch_loss,
    loss_and_grads,
    ranking_loss,
    sample_triples,
    train,
)

from gradcheck import rel_error


def test_two_records_force_the_other_negative():
    for epoch in range(5):
        triples = sample_triples(2, 42, epoch)
        assert [(t.code, t.positive, t.negative) for t in triples] == [(0, 0, 1), (1, 1, 0)]


def test_single_record_cannot_sample():
    with pytest.raises(CorpusTooSmall):
        sample_triples(1, 42, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300), st.integers(0, 2**31 - 1), st.integers(0, 1000))
def test_sampling_is_deterministic_and_never_self(n, seed, epoch):
    a = sample_triples(n, seed, epoch)
    assert a == sample_triples(n, seed, epoch)
    assert [t.code for t in a] == list(range(n))
    assert all(t.positive == t.code and t.negative != t.code for t in a)


def test_negatives_are_uniform_over_other_records():
    n, epochs = 1000, 100
    # offset of the negative among the 999 candidates of its anchor
    slots = np.concatenate([
        [t.negative - (t.negative > t.code) for t in sample_triples(n, 7, e)] for e in range(epochs)
    ])
    draws = len(slots)
    p = 1 / (n - 1)
    counts = np.bincount(slots, minlength=n - 1)
    sigma = np.sqrt(draws * p * (1 - p))
    outside = np.abs(counts - draws * p) > 3 * sigma
    # 0.27% of slots are expected outside three sigma
    assert outside.mean() < 0.01
    chi2 = ((counts - draws * p) ** 2 / (draws * p)).sum()
    dof = n - 2
    assert abs(chi2 - dof) < 5 * np.sqrt(2 * dof)


@pytest.mark.parametrize(
    "pos, neg, margin, expected",
    [(0.9, 0.1, 0.05, 0.0), (0.3, 0.3, 0.05, 0.05), (0.0, 0.5, 0.05, 0.55)],
)
def test_ranking_loss_examples(pos, neg, margin, expected):
    assert ranking_loss(pos, neg, margin) == pytest.approx(expected, abs=1e-15)


def test_ranking_loss_grid():
    grid = (-1.0, -0.5, 0.0, 0.5, 1.0)
    for margin in (0.01, 0.05, 0.2):
        for pos in grid:
            for neg in grid:
                got = ranking_loss(pos, neg, margin)
                assert got == max(0.0, margin - pos + neg)
                assert got >= 0 and (got == 0) == (pos - neg >= margin)


def tiny_config(**kw):
    hp = dict(embed_dim=3, hidden_dim=3, common_dim=3, rounds=2, precision="float64", dropout=0.0,
              batch_size=4, learning_rate=1e-3)
    hp.update(kw)
    return ModelConfig(Hyperparams(**hp))


@pytest.fixture(scope="module")
def corpus():
    return extract_all(synthetic_corpus(8)).examples


def test_batch_loss_gradient_matches_finite_differences(corpus):
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    # a large margin keeps every hinge active so the loss is smooth
    model.config.hyper.margin = 3.0
    triples = sample_triples(len(corpus), 3, 0)[:4]
    _, grads = loss_and_grads(model, corpus, triples)
    rng = np.random.default_rng(11)
    names = model.params.names()
    for name in rng.choice(names, size=12, replace=False):
        param = model.params[name].data
        grad = grads[name]
        flat = rng.choice(param.size, size=min(4, param.size), replace=False)
        numeric = []
        for k in flat:
            idx = np.unravel_index(k, param.shape)
            old = param[idx]
            param[idx] = old + 1e-6
            up = float(batch_loss(model, corpus, triples)[0].data)
            param[idx] = old - 1e-6
            down = float(batch_loss(model, corpus, triples)[0].data)
            param[idx] = old
            numeric.append((up - down) / 2e-6)
        analytic = [grad[np.unravel_index(k, param.shape)] for k in flat]
        assert rel_error(np.array(analytic), np.array(numeric)) < 1e-5, name


def test_inactive_triple_has_zero_gradient(corpus):
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    _, pos, neg = batch_loss(model, corpus, [TrainingTriple(0, 0, 1)])
    gap = float(pos.data[0] - neg.data[0])
    # orient the pair so the "positive" description scores higher
    triple = TrainingTriple(0, 0, 1) if gap > 0 else TrainingTriple(0, 1, 0)
    model.config.hyper.margin = abs(gap) / 2
    loss, grads = loss_and_grads(model, corpus, [triple])
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.values())


def test_zero_margin_with_identical_descriptions_changes_nothing():
    code = "int f(int x) {{ return x + {k}; }}"
    records = [CodeRecord(f"r{k}", code.format(k=k), "add a constant to x") for k in range(2)]
    examples = [extract(r) for r in records]
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(examples, cfg))
    model.config.hyper.margin = 0.0
    before = model.params.copy()
    loss, grads = loss_and_grads(model, examples, sample_triples(2, 0, 0))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.values())
    adam_step(model.params, grads, 1e-3)
    for name in model.params.names():
        assert np.array_equal(model.params[name].data, before[name].data)


def test_same_seed_gives_identical_first_checkpoint(corpus):
    def run():
        cfg = tiny_config(dropout=0.2, seed=9)
        model = Model(cfg, Vocabularies.build(corpus, cfg))
        train(model, corpus, epochs=1)
        return model.to_bytes()

    assert run() == run()


def test_different_seed_changes_the_result(corpus):
    def run(seed):
        cfg = tiny_config(seed=seed)
        model = Model(cfg, Vocabularies.build(corpus, cfg))
        train(model, corpus, epochs=1)
        return model.to_bytes()

    assert run(1) != run(2)


def test_token_only_model_has_no_tree_or_graph_parameters(corpus):
    cfg = tiny_config()
    cfg.modalities = ("tok",)
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    names = model.params.names()
    assert not any(n.startswith(("ast.", "cfg.", "attn.ast", "attn.cfg")) for n in names)
    assert model.params["fusion.W"].shape == (9, 3)
    train(model, corpus, epochs=1)


def test_loss_is_bounded_by_margin_plus_two(corpus):
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    triples = sample_triples(len(corpus), 0, 0)
    loss, pos, neg = batch_loss(model, corpus, triples)
    assert 0 <= float(loss.data) <= len(triples) * (cfg.hyper.margin + 2)
    assert np.all(np.abs(pos.data) <= 1 + 1e-12) and np.all(np.abs(neg.data) <= 1 + 1e-12)


def test_on_epoch_can_stop_training(corpus):
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    _, stats = train(model, corpus, epochs=10, on_epoch=lambda e, s: e < 1)
    assert len(stats.epoch_loss) == 2


def test_training_writes_checkpoints(corpus, tmp_path):
    cfg = tiny_config()
    model = Model(cfg, Vocabularies.build(corpus, cfg))
    train(model, corpus, epochs=2, out_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["epoch_001.ckpt", "epoch_002.ckpt", "stats.json"]
    loaded, digest = Model.load(tmp_path / "epoch_002.ckpt")
    assert loaded.to_bytes() == model.to_bytes()
    assert len(digest) == 64
