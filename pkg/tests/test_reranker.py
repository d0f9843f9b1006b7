import math
import random

import pytest
import torch

from re3g.reranker import (
    CrossEncoder,
    CrossEncoderConfig,
    NegativeSampler,
    build_pools,
    infonce_loss,
    infonce_multi_positive,
    read_pools,
    rerank,
    resample_fraction,
    sample_negatives,
    train_reranker,
    write_pools,
)
from re3g.retriever import BiEncoder, BiEncoderConfig, build_index, evaluate_recall, train_phase1
from re3g.retriever.index import RetrievalResult
from re3g.retriever.train import build_query
from re3g.synth import generate_corpus
from re3g.textproc import Vocab

torch.set_num_threads(1)


@pytest.fixture(scope="module")
def tiny():
    corpus = generate_corpus(n_clusters=2, entities_per_cluster=8, n_dialogues=16, n_dev=0, seed=3)
    vocab = Vocab.build(corpus.all_texts())
    return corpus, vocab


def _ce(vocab, seed=0, layers=1):
    torch.manual_seed(seed)
    return CrossEncoder(vocab, CrossEncoderConfig(d_model=32, n_layers=layers))


# ------------------------------------------------------------ pair scoring

def test_score_pair_deterministic(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    p = corpus.passages[0].text
    q = "⟨user⟩ how many credits does it cost?"
    assert ce.score_pair(p, q) == ce.score_pair(p, q)


def test_score_pair_in_unit_interval(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    rng = random.Random(0)
    for _ in range(100):
        p = rng.choice(corpus.passages).text
        q = "⟨user⟩ " + " ".join(rng.choice(p.split()) for _ in range(5))
        s = ce.score_pair(p, q)
        assert 0.0 < s < 1.0


def test_batched_equals_one_at_a_time(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    q = build_query(corpus.train_examples[0], 128)
    texts = [p.text for p in corpus.passages[:7]]
    batched = ce.score_pairs(texts, q)
    single = [ce.score_pair(t, q) for t in texts]
    for a, b in zip(batched, single):
        assert abs(a - b) < 1e-5


def test_score_pair_rejects_empty(tiny):
    _, vocab = tiny
    ce = _ce(vocab)
    with pytest.raises(ValueError):
        ce.score_pair("", "⟨user⟩ hi")
    with pytest.raises(ValueError):
        ce.score_pair("text", "  ")


# ---------------------------------------------------------------- rerank

def _results(ids):
    return [
        RetrievalResult(passage_id=pid, retriever_score=10.0 - i, rank=i + 1)
        for i, pid in enumerate(ids)
    ]


def test_rerank_single_candidate(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    pid = corpus.passages[0].passage_id
    out = rerank(ce, "⟨user⟩ q", _results([pid]), corpus.passages_by_id, top_n=5)
    assert len(out) == 1
    assert out[0].final_rank == 1
    assert out[0].passage_id == pid


def test_rerank_orders_by_score_not_retriever_order(tiny, monkeypatch):
    corpus, vocab = tiny
    ce = _ce(vocab)
    ids = [p.passage_id for p in corpus.passages[:2]]
    monkeypatch.setattr(
        type(ce), "score_pairs", lambda self, texts, q, batch_size=64: [0.1, 0.9]
    )
    out = rerank(ce, "⟨user⟩ q", _results(ids), corpus.passages_by_id, top_n=2)
    assert [c.passage_id for c in out] == [ids[1], ids[0]]
    assert [c.final_rank for c in out] == [1, 2]


def test_rerank_matches_sort_oracle_and_is_permutation(tiny, monkeypatch):
    corpus, vocab = tiny
    ce = _ce(vocab)
    rng = random.Random(7)
    ids = [p.passage_id for p in corpus.passages[:20]]
    scores = [rng.random() for _ in ids]
    monkeypatch.setattr(
        type(ce), "score_pairs", lambda self, texts, q, batch_size=64: list(scores)
    )
    out = rerank(ce, "⟨user⟩ q", _results(ids), corpus.passages_by_id, top_n=20)
    assert sorted(c.passage_id for c in out) == sorted(ids)
    oracle = [pid for _, pid in sorted(zip(scores, ids), key=lambda t: -t[0])]
    assert [c.passage_id for c in out] == oracle


def test_rerank_scale_equivariance(tiny, monkeypatch):
    corpus, vocab = tiny
    ce = _ce(vocab)
    rng = random.Random(9)
    ids = [p.passage_id for p in corpus.passages[:12]]
    scores = [rng.random() for _ in ids]

    def with_scores(vals):
        monkeypatch.setattr(
            type(ce), "score_pairs", lambda self, texts, q, batch_size=64: list(vals)
        )
        return [
            c.passage_id
            for c in rerank(ce, "⟨user⟩ q", _results(ids), corpus.passages_by_id, 12)
        ]

    base = with_scores(scores)
    squeezed = with_scores([math.tanh(3 * s) for s in scores])  # strictly increasing
    assert base == squeezed


def test_rerank_validates_inputs(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    with pytest.raises(ValueError):
        rerank(ce, "⟨user⟩ q", [], corpus.passages_by_id, top_n=5)
    with pytest.raises(ValueError):
        rerank(ce, "⟨user⟩ q", _results([corpus.passages[0].passage_id]),
               corpus.passages_by_id, top_n=0)


# ------------------------------------------------------------- negatives

def test_sample_negatives_paper_counts():
    pool = [f"p{i}" for i in range(100)]
    got = sample_negatives(pool, {"p3", "p7"}, 30, random.Random(1))
    assert len(got) == 30
    assert not {"p3", "p7"} & set(got)
    assert len(set(got)) == 30


def test_sample_negatives_capped_pool():
    pool = [f"p{i}" for i in range(20)]
    got = sample_negatives(pool, {"p0"}, 30, random.Random(2))
    assert len(got) == 19


def test_sample_negatives_empty_pool_warns(caplog):
    got = sample_negatives(["p0"], {"p0"}, 5, random.Random(0))
    assert got == []


def test_sampler_deterministic_and_epoch_varying():
    sampler = NegativeSampler(pool_size=50, n_negatives=10, rng_seed=42)
    pool = [f"p{i}" for i in range(50)]
    a = sampler.draw(pool, {"p1"}, epoch=0, example_id="ex1")
    b = sampler.draw(pool, {"p1"}, epoch=0, example_id="ex1")
    c = sampler.draw(pool, {"p1"}, epoch=1, example_id="ex1")
    assert a == b
    assert set(a) != set(c)


def test_sample_uniformity_chi_square():
    # marginal inclusion over 10^4 draws of 3 from a 10-candidate pool;
    # chi-square within 3 sigma of its dof-9 expectation
    pool = [f"p{i}" for i in range(10)]
    counts = {pid: 0 for pid in pool}
    trials = 10_000
    sampler = NegativeSampler(pool_size=10, n_negatives=3, rng_seed=11)
    for t in range(trials):
        for pid in sampler.draw(pool, set(), epoch=t, example_id="x"):
            counts[pid] += 1
    expected = trials * 3 / 10
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 9 + 3 * math.sqrt(18)


def test_pools_round_trip(tmp_path):
    pools = {"ex1": [f"p{i}" for i in range(100)], "ex2": ["a", "b"]}
    write_pools(pools, tmp_path / "pools.jsonl")
    assert read_pools(tmp_path / "pools.jsonl") == pools


# --------------------------------------------------------------- infonce

def test_infonce_uniform_31():
    loss = infonce_loss(torch.tensor(0.5), torch.full((30,), 0.5), tau=0.07)
    assert abs(loss.item() - math.log(31)) < 1e-6


def test_infonce_saturation():
    loss = infonce_loss(torch.tensor(10 * 0.07 + 1.0), torch.ones(30), tau=0.07)
    assert loss.item() < 0.002


def test_infonce_derived_oracle():
    pos, negs, tau = 1.0, [0.5, 0.0], 0.07
    z = sum(math.exp(s / tau) for s in [pos] + negs)
    oracle = -math.log(math.exp(pos / tau) / z)
    loss = infonce_loss(
        torch.tensor(pos, dtype=torch.float64),
        torch.tensor(negs, dtype=torch.float64),
        tau,
    )
    assert abs(loss.item() - oracle) < 1e-6


def test_infonce_tau_validation():
    with pytest.raises(ValueError):
        infonce_loss(torch.tensor(1.0), torch.zeros(3), tau=0.0)
    with pytest.raises(ValueError):
        infonce_loss(torch.tensor(1.0), torch.zeros(3), tau=-1.0)


def test_infonce_empty_negatives_zero(caplog):
    loss = infonce_loss(torch.tensor(2.0, requires_grad=True), torch.zeros(0), tau=0.07)
    assert loss.item() == 0.0


def test_infonce_nonnegative_and_equality_cases():
    rng = torch.Generator().manual_seed(0)
    for _ in range(20):
        pos = torch.randn((), generator=rng)
        negs = torch.randn(7, generator=rng)
        assert infonce_loss(pos, negs, tau=0.07).item() >= 0.0
    n = 12
    equal = infonce_loss(torch.tensor(0.2), torch.full((n,), 0.2), tau=0.3)
    assert abs(equal.item() - math.log(n + 1)) < 1e-6


def test_infonce_tau_limits():
    # strict-max positive: loss -> 0 as tau -> 0
    lo = infonce_loss(torch.tensor(1.0), torch.tensor([0.9, 0.5]), tau=1e-3)
    assert lo.item() < 1e-6
    # strict-max negative: loss -> inf as tau -> 0
    hi = infonce_loss(torch.tensor(0.5), torch.tensor([0.9, 0.1]), tau=1e-3)
    assert hi.item() > 100.0


def test_infonce_multi_positive_sums():
    negs = torch.tensor([0.1, 0.2])
    a = infonce_loss(torch.tensor(1.0), negs, 0.5)
    b = infonce_loss(torch.tensor(0.7), negs, 0.5)
    both = infonce_multi_positive(torch.tensor([1.0, 0.7]), negs, 0.5)
    assert abs(both.item() - (a.item() + b.item())) < 1e-6


@pytest.mark.parametrize("tau", [0.07, 1.0])
@pytest.mark.parametrize("seed", range(10))
def test_gradcheck_infonce(tau, seed):
    g = torch.Generator().manual_seed(seed)
    scores = torch.randn(9, generator=g, dtype=torch.float64)

    def fn(x):
        return infonce_loss(x[0], x[1:], tau)

    x = scores.clone().requires_grad_(True)
    fn(x).backward()
    h = 1e-6
    numeric = torch.zeros_like(scores)
    for i in range(scores.numel()):
        up, down = scores.clone(), scores.clone()
        up[i] += h
        down[i] -= h
        numeric[i] = (fn(up) - fn(down)) / (2 * h)
    denom = max(x.grad.abs().max().item(), numeric.abs().max().item(), 1e-12)
    assert ((x.grad - numeric).abs().max().item() / denom) < 1e-4


# --------------------------------------------------------------- training

def test_train_reranker_requires_pools(tiny):
    corpus, vocab = tiny
    ce = _ce(vocab)
    with pytest.raises(ValueError, match="pools"):
        train_reranker(ce, corpus.train_examples, corpus.passages, {}, epochs=1)


def test_train_reranker_toy_run(tiny):
    corpus, vocab = tiny
    torch.manual_seed(0)
    retriever = BiEncoder(vocab, BiEncoderConfig(d_model=32, n_layers=0))
    train_phase1(retriever, corpus.train_examples, corpus.passages,
                 epochs=40, batch_size=16, lr=1e-2, seed=0)
    index = build_index(corpus.passages, retriever)
    pools = build_pools(retriever, index, corpus.train_examples, pool_size=16)

    ce = _ce(vocab, seed=0, layers=1)
    ce.warm_start_embeddings(retriever.context_encoder.tok_emb.weight)
    metrics = train_reranker(
        ce, corpus.train_examples, corpus.passages, pools,
        epochs=5, lr=5e-3, n_negatives=8, pool_size=16, tau=0.07, seed=0,
    )
    losses = metrics["epoch_losses"]
    assert losses[-1] < 0.5 * losses[0]
    # dynamic sampling: most examples see fresh negatives between epochs
    assert resample_fraction(metrics["negatives_per_epoch"]) >= 0.9

    pbi = corpus.passages_by_id
    base = evaluate_recall(retriever, index, corpus.train_examples, ks=(1,))
    from re3g.reranker import rerank_recall

    after = rerank_recall(ce, retriever, index, corpus.train_examples, pbi,
                          pool_size=16, ks=(1,))
    assert after["rerank_recall@1"] >= base["recall@1"]
