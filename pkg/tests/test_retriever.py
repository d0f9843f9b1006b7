import math
import random

import numpy as np
import pytest
import torch

from re3g.retriever import (
    BiEncoder,
    BiEncoderConfig,
    DenseIndex,
    build_index,
    contrastive_nll,
    distillation_kl,
    dot_similarity,
    kl_divergence,
    marginal_nll,
    phase1_contrastive_loss,
    train_phase1,
    train_phase2,
    train_phase3,
)
from re3g.generation import GeneratorConfig, GeneratorModel
from re3g.synth import generate_corpus
from re3g.textproc import Vocab

torch.set_num_threads(1)


@pytest.fixture(scope="module")
def tiny_corpus():
    # 16 plans, 16 dialogues: every plan queried exactly once
    return generate_corpus(n_clusters=2, entities_per_cluster=8, n_dialogues=16, n_dev=0, seed=3)


@pytest.fixture(scope="module")
def tiny_vocab(tiny_corpus):
    return Vocab.build(tiny_corpus.all_texts())


def _model(vocab, seed=0, layers=0):
    torch.manual_seed(seed)
    return BiEncoder(vocab, BiEncoderConfig(d_model=32, n_layers=layers))


# ---------------------------------------------------------------- encoding

def test_encode_deterministic(tiny_vocab):
    m = _model(tiny_vocab)
    a = m.encode_context("hello there plan")
    b = m.encode_context("hello there plan")
    assert np.array_equal(a, b)


def test_encode_distinct_inputs(tiny_corpus, tiny_vocab):
    m = _model(tiny_vocab)
    a = m.encode_passage(tiny_corpus.passages[0].text)
    b = m.encode_passage(tiny_corpus.passages[5].text)
    assert not np.allclose(a, b)


def test_encode_clip_equals_prefix(tiny_vocab):
    m = _model(tiny_vocab)
    long_text = " ".join(f"w{i % 7}" for i in range(200))
    prefix_tokens = m.config.max_passage_tokens
    from re3g.textproc import tokenize

    toks = tokenize(long_text)[:prefix_tokens]
    clipped = " ".join(toks)
    assert np.allclose(m.encode_passage(long_text), m.encode_passage(clipped), atol=1e-6)


def test_encode_empty_errors(tiny_vocab):
    m = _model(tiny_vocab)
    with pytest.raises(ValueError):
        m.encode_context("   ")


# ------------------------------------------------------------------- dots

def test_dot_orthogonal():
    assert dot_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_dot_arithmetic():
    assert dot_similarity([1.0, 2.0], [3.0, 4.0]) == 11.0


def test_dot_matches_scalar_loop_oracle():
    rng = random.Random(5)
    a = [rng.uniform(-1, 1) for _ in range(64)]
    b = [rng.uniform(-1, 1) for _ in range(64)]
    oracle = 0.0
    for x, y in zip(a, b):
        oracle += x * y
    assert abs(dot_similarity(a, b) - oracle) < 1e-6


def test_dot_width_mismatch():
    with pytest.raises(ValueError):
        dot_similarity([1.0, 2.0], [1.0])


# ------------------------------------------------------------------ index

def _random_index(n=100, d=16, seed=0):
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(n, d)).astype(np.float32)
    ids = [f"p{i:04d}" for i in range(n)]
    return DenseIndex(matrix, ids), rng


def brute_force_search(index, query, k):
    scored = []
    for row, pid in enumerate(index.passage_ids):
        s = 0.0
        for a, b in zip(index.matrix[row], query):
            s += float(a) * float(b)
        scored.append((pid, s))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def test_retrieve_full_permutation():
    index, rng = _random_index(30)
    q = rng.normal(size=16).astype(np.float32)
    results = index.search(q, 30)
    assert sorted(r.passage_id for r in results) == sorted(index.passage_ids)
    assert [r.rank for r in results] == list(range(1, 31))
    scores = [r.retriever_score for r in results]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_forced_argmax():
    q = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)
    rows = np.stack([np.array([0, 1, 0, 0]), q * 10, np.array([0, 0, 1, 0])]).astype(
        np.float32
    )
    index = DenseIndex(rows, ["a", "b", "c"])
    assert index.search(q, 1)[0].passage_id == "b"


def test_retrieve_matches_brute_force_oracle():
    index, rng = _random_index(100, 16, seed=2)
    q = rng.normal(size=16).astype(np.float32)
    got = index.search(q, 10)
    expected = brute_force_search(index, q, 10)
    assert [(r.passage_id) for r in got] == [pid for pid, _ in expected]
    for r, (_, s) in zip(got, expected):
        assert abs(r.retriever_score - s) < 1e-4


def test_retrieve_tie_break_by_passage_id():
    matrix = np.ones((4, 3), dtype=np.float32)
    index = DenseIndex(matrix, ["d", "b", "a", "c"])
    got = [r.passage_id for r in index.search(np.ones(3, dtype=np.float32), 2)]
    assert got == ["a", "b"]


def test_index_persistence_round_trip(tmp_path):
    index, rng = _random_index(20, 8)
    index.save(tmp_path / "idx")
    loaded = DenseIndex.load(tmp_path / "idx")
    assert np.array_equal(loaded.matrix, index.matrix)
    assert loaded.passage_ids == index.passage_ids
    assert loaded.snapshot_version == index.snapshot_version


def test_index_width_mismatch_on_load(tmp_path):
    index, _ = _random_index(20, 8)
    index.save(tmp_path / "idx")
    with pytest.raises(ValueError, match="width"):
        DenseIndex.load(tmp_path / "idx", expect_dim=16)


def test_index_snapshot_immutability():
    index, rng = _random_index(50, 8, seed=4)
    q = rng.normal(size=8).astype(np.float32)
    first = [(r.passage_id, r.retriever_score) for r in index.search(q, 7)]
    for _ in range(3):
        again = [(r.passage_id, r.retriever_score) for r in index.search(q, 7)]
        assert again == first
    with pytest.raises(ValueError):
        index.matrix[0, 0] = 99.0


def test_empty_query_k_validation():
    index, rng = _random_index(5, 4)
    with pytest.raises(ValueError):
        index.search(np.zeros(4, dtype=np.float32), 0)


# ----------------------------------------------------------- loss oracles

def softmax_nll_oracle(pos, negs):
    exps = [math.exp(pos)] + [math.exp(n) for n in negs]
    return -math.log(math.exp(pos) / sum(exps))


def test_phase1_loss_uniform_pair():
    loss = contrastive_nll(torch.tensor(0.3), torch.tensor([0.3]))
    assert abs(loss.item() - math.log(2)) < 1e-6


def test_phase1_loss_saturation():
    loss = contrastive_nll(torch.tensor(30.0), torch.tensor([0.0]))
    assert loss.item() < 1e-9


def test_phase1_loss_derived_oracle():
    pos, negs = 2.0, [1.0, 0.5, 0.0]
    loss = contrastive_nll(torch.tensor(pos), torch.tensor(negs))
    assert abs(loss.item() - softmax_nll_oracle(pos, negs)) < 1e-6


def test_phase2_marginal_k1():
    loss = marginal_nll(torch.tensor([5.0]), torch.log(torch.tensor([0.5])))
    assert abs(loss.item() - math.log(2)) < 1e-6


def test_phase2_marginal_equal_probs():
    ret = torch.tensor([1.0, 1.0])
    gen = torch.log(torch.tensor([0.8, 0.2]))
    loss = marginal_nll(ret, gen)
    assert abs(loss.item() - (-math.log(0.5))) < 1e-6


def test_phase2_marginal_three_candidate_oracle():
    ret = [0.5, 1.5, -0.2]
    gen_p = [0.3, 0.05, 0.6]
    exps = [math.exp(s) for s in ret]
    z = sum(exps)
    marginal = sum(e / z * p for e, p in zip(exps, gen_p))
    oracle = -math.log(marginal)
    loss = marginal_nll(
        torch.tensor(ret, dtype=torch.float64),
        torch.log(torch.tensor(gen_p, dtype=torch.float64)),
    )
    assert abs(loss.item() - oracle) < 1e-6


def test_phase2_softmax_normalization():
    ret = torch.randn(24, dtype=torch.float64)
    probs = torch.softmax(ret, dim=0)
    assert abs(probs.sum().item() - 1.0) < 1e-6


def kl_oracle(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def test_kl_identical_zero():
    s = torch.tensor([0.2, 1.0, -0.5])
    assert kl_divergence(s, s.clone()).item() < 1e-9


def test_kl_derived_distributions():
    teacher = [0.6, 0.3, 0.1]
    student = [0.7, 0.2, 0.1]
    loss = kl_divergence(
        torch.log(torch.tensor(teacher, dtype=torch.float64)),
        torch.log(torch.tensor(student, dtype=torch.float64)),
    )
    assert abs(loss.item() - kl_oracle(teacher, student)) < 1e-6
    assert abs(loss.item() - 0.029149) < 5e-6


def test_kl_onehot_vs_uniform():
    teacher = torch.log(torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64))
    student = torch.zeros(4, dtype=torch.float64)
    loss = kl_divergence(teacher, student)
    assert abs(loss.item() - math.log(4)) < 1e-9


def test_kl_length_mismatch():
    with pytest.raises(ValueError):
        kl_divergence(torch.zeros(3), torch.zeros(4))


def test_distillation_direction_flag():
    rr = torch.tensor([2.0, 0.0, -1.0])
    ret = torch.tensor([0.5, 0.5, 0.5], requires_grad=True)
    ts = distillation_kl(rr, ret, "teacher_student")
    st = distillation_kl(rr, ret, "student_teacher")
    assert ts.item() != pytest.approx(st.item())
    ts.backward()
    assert ret.grad is not None
    with pytest.raises(ValueError):
        distillation_kl(rr, ret, "sideways")


# -------------------------------------------------------- gradient checks

def central_difference(fn, x, h=1e-5):
    grads = torch.zeros_like(x)
    for i in range(x.numel()):
        up = x.clone()
        up[i] += h
        down = x.clone()
        down[i] -= h
        grads[i] = (fn(up) - fn(down)) / (2 * h)
    return grads


def rel_err(a, b):
    denom = max(a.abs().max().item(), b.abs().max().item(), 1e-12)
    return (a - b).abs().max().item() / denom


@pytest.mark.parametrize("seed", range(10))
def test_gradcheck_contrastive(seed):
    g = torch.Generator().manual_seed(seed)
    scores = torch.randn(8, generator=g, dtype=torch.float64)

    def fn(x):
        return contrastive_nll(x[0], x[1:])

    x = scores.clone().requires_grad_(True)
    fn(x).backward()
    numeric = central_difference(fn, scores)
    assert rel_err(x.grad, numeric) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_gradcheck_kl(seed):
    g = torch.Generator().manual_seed(100 + seed)
    teacher = torch.randn(8, generator=g, dtype=torch.float64)
    student = torch.randn(8, generator=g, dtype=torch.float64)

    def fn(x):
        return kl_divergence(teacher, x)

    x = student.clone().requires_grad_(True)
    fn(x).backward()
    numeric = central_difference(fn, student)
    assert rel_err(x.grad, numeric) < 1e-4


# ------------------------------------------------------ training behaviour

def test_phase1_toy_loss_drops(tiny_corpus, tiny_vocab):
    model = _model(tiny_vocab, seed=1)
    metrics = train_phase1(
        model, tiny_corpus.train_examples, tiny_corpus.passages,
        epochs=1000, steps=200, batch_size=16, lr=1e-2, seed=1,
    )
    losses = metrics["step_losses"]
    assert len(losses) == 200
    assert losses[-1] < 0.25 * losses[0]


def test_phase1_requires_positive(tiny_corpus, tiny_vocab):
    model = _model(tiny_vocab)
    passages_by_id = tiny_corpus.passages_by_id
    ex = tiny_corpus.train_examples[0]
    object.__setattr__(ex, "positive_passage_ids", frozenset())
    try:
        with pytest.raises(ValueError):
            phase1_contrastive_loss(model, [ex], passages_by_id)
    finally:
        object.__setattr__(
            ex, "positive_passage_ids", frozenset({tiny_corpus.passages[0].passage_id})
        )


def test_phase2_passage_encoder_frozen(tiny_corpus, tiny_vocab):
    model = _model(tiny_vocab, seed=2)
    train_phase1(
        model, tiny_corpus.train_examples, tiny_corpus.passages,
        epochs=1, batch_size=8, lr=1e-3, seed=2,
    )
    import hashlib

    def passage_hash(m):
        h = hashlib.sha256()
        for name, t in sorted(m.passage_encoder.state_dict().items()):
            h.update(name.encode())
            h.update(t.detach().numpy().tobytes())
        return h.hexdigest()

    before = passage_hash(model)
    gen = GeneratorModel(tiny_vocab, GeneratorConfig(d_model=32, n_layers=1, max_src=96, max_tgt=24))
    train_phase2(
        model, gen.net, tiny_corpus.train_examples, tiny_corpus.passages,
        k_train=4, epochs=1, batch_size=4, lr=1e-3, seed=2,
    )
    assert passage_hash(model) == before
    for p in model.passage_encoder.parameters():
        assert p.grad is None or torch.all(p.grad == 0)


def test_phase2_clips_k_train(tiny_corpus, tiny_vocab, caplog):
    model = _model(tiny_vocab, seed=3)
    gen = GeneratorModel(tiny_vocab, GeneratorConfig(d_model=32, n_layers=1, max_src=96, max_tgt=24))
    metrics = train_phase2(
        model, gen.net, tiny_corpus.train_examples[:4], tiny_corpus.passages,
        k_train=999, epochs=1, batch_size=4, lr=1e-3, seed=3,
    )
    assert metrics["phase"] == 2


def test_phase3_dev_kl_decreases(tiny_corpus, tiny_vocab):
    from re3g.reranker import CrossEncoder, CrossEncoderConfig

    model = _model(tiny_vocab, seed=4)
    train_phase1(
        model, tiny_corpus.train_examples, tiny_corpus.passages,
        epochs=30, batch_size=8, lr=5e-3, seed=4,
    )
    torch.manual_seed(4)
    ce = CrossEncoder(tiny_vocab, CrossEncoderConfig(d_model=32, n_layers=1))
    metrics = train_phase3(
        model, ce, tiny_corpus.train_examples, tiny_corpus.passages,
        k_train=6, epochs=2, batch_size=4, lr=1e-3, seed=4,
        dev_examples=tiny_corpus.train_examples[:6],
    )
    kl = metrics["dev_kl"]
    assert len(kl) == 3
    assert kl[-1] < kl[0]


def test_phase3_rebuilds_index_snapshots(tiny_corpus, tiny_vocab, tmp_path):
    from re3g.reranker import CrossEncoder, CrossEncoderConfig

    model = _model(tiny_vocab, seed=5)
    torch.manual_seed(5)
    ce = CrossEncoder(tiny_vocab, CrossEncoderConfig(d_model=32, n_layers=1))
    metrics = train_phase3(
        model, ce, tiny_corpus.train_examples[:8], tiny_corpus.passages,
        k_train=4, epochs=2, batch_size=4, lr=1e-3, seed=5,
        index_dir=tmp_path / "idx",
    )
    assert metrics["snapshot_version"] == 3  # initial + one per epoch
    loaded = DenseIndex.load(tmp_path / "idx")
    assert loaded.snapshot_version == 3


def test_checkpoint_round_trip(tiny_vocab, tmp_path):
    model = _model(tiny_vocab, seed=6)
    model.untie_embeddings()
    path = tmp_path / "re3g.retriever.phase1.ckpt"
    model.save(path, phase=1)
    loaded, phase = BiEncoder.load(path)
    assert phase == 1
    assert loaded.weight_hash() == model.weight_hash()
    text = "hello plan cost"
    assert np.allclose(loaded.encode_context(text), model.encode_context(text))
