"""Bundled synthetic corpus generator for desk-scale experiments.

Builds a deterministic pseudo-language corpus: clusters of topically related
documents (one document per cluster, one section per "plan"), plus multi-turn
dialogues asking for a specific plan's price. Each plan name also shows up in
two sibling sections' compare-sentences, so several passages look identical
to a shallow retriever while the pricing fact late in the section pins down
the right one — headroom the reranker and span refinement can exploit.

The generator invokes the real structural splitter, so grounding annotations
reference the same passage ids the pipeline will produce after ingestion.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import (
    DialogueContext,
    DialogueTurn,
    Document,
    GroundedExample,
    Passage,
    StructuralPolicy,
    split_passages,
)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_PERIODS = ("week", "month", "quarter", "year")

_TEMPLATE_WORDS = frozenset(
    """the a an and of office handles requests for members compare with or
    before choosing cover agents review papers approving claim each term plan
    costs credits per week month quarter year hello i have question about sure
    can help plans which are you interested in how many does what please tell
    me cost is""".split()
)


def _word_factory(rng: random.Random):
    used: set[str] = set(_TEMPLATE_WORDS)

    def make(syllables: int = 2) -> str:
        while True:
            word = "".join(
                rng.choice(_CONSONANTS) + rng.choice(_VOWELS)
                for _ in range(syllables)
            )
            if word not in used:
                used.add(word)
                return word

    return make


@dataclass
class SyntheticCorpus:
    documents: list[Document]
    passages: list[Passage]
    train_examples: list[GroundedExample]
    dev_examples: list[GroundedExample]

    @property
    def passages_by_id(self) -> dict[str, Passage]:
        return {p.passage_id: p for p in self.passages}

    def all_texts(self) -> list[str]:
        """Everything the shared vocabulary must cover."""
        texts = [p.text for p in self.passages]
        for ex in self.train_examples + self.dev_examples:
            texts.extend(t.text for t in ex.context.turns)
            texts.append(ex.gold_answer)
            texts.append(ex.gold_span)
        return texts


def _section(entity: str, topic: str, kws: list[str], sibling: str,
             price: int, period: str) -> tuple[str, str]:
    """Returns (section text, gold span). The pricing fact sits past the
    retriever's passage-token budget by construction, and the sibling
    mention makes exactly two passages per plan name look alike up front."""
    fact = f"the {entity} plan costs {price} credits per {period}."
    body = (
        f"# {entity} plan\n"
        f"the {topic} office handles {kws[0]} {kws[1]} and {kws[2]} requests "
        f"for members. compare with {sibling} before choosing a cover. "
        f"agents review {kws[3]} papers before approving a {kws[4]} claim "
        f"each term.\n"
        f"{fact}\n"
    )
    return body, fact


def generate_corpus(
    n_clusters: int = 20,
    entities_per_cluster: int = 10,
    n_dialogues: int = 300,
    n_dev: int = 40,
    seed: int = 7,
) -> SyntheticCorpus:
    rng = random.Random(seed)
    make_word = _word_factory(rng)

    topics = [make_word(3) for _ in range(n_clusters)]
    cluster_kws = [[make_word(2) for _ in range(5)] for _ in range(n_clusters)]
    entities = [
        [make_word(2) for _ in range(entities_per_cluster)]
        for _ in range(n_clusters)
    ]

    documents: list[Document] = []
    passages: list[Passage] = []
    # (cluster, entity index) -> (passage_id, entity, topic, span, answer)
    plans: list[dict] = []
    for c in range(n_clusters):
        sections = []
        spans = []
        for e in range(entities_per_cluster):
            ent = entities[c][e]
            sibling = entities[c][(e + 1) % entities_per_cluster]
            price = rng.randint(10, 99)
            period = rng.choice(_PERIODS)
            text, span = _section(
                ent, topics[c], cluster_kws[c], sibling, price, period
            )
            sections.append(text)
            spans.append(span)
        doc = Document(
            doc_id=f"doc{c:02d}",
            title=f"{topics[c]} plans",
            body="".join(sections),
            source_meta={"cluster": str(c)},
        )
        documents.append(doc)
        doc_passages = split_passages(doc, StructuralPolicy())
        if len(doc_passages) != entities_per_cluster:
            raise RuntimeError(
                f"expected {entities_per_cluster} sections, got {len(doc_passages)}"
            )
        passages.extend(doc_passages)
        for e, passage in enumerate(doc_passages):
            k = entities_per_cluster
            # hard negatives: in-cluster sections that never mention plan e
            # (neither their own header nor their compare sentence), farthest
            # from e first so lexical overlap stays minimal
            valid = [j for j in range(k) if j != e and (j + 1) % k != e]
            valid.sort(key=lambda j: (-min((j - e) % k, (e - j) % k), j))
            hard = [doc_passages[j].passage_id for j in valid[:2]]
            plans.append(
                {
                    "passage_id": passage.passage_id,
                    "entity": entities[c][e],
                    "topic": topics[c],
                    "span": spans[e],
                    "hard_negative_ids": hard,
                }
            )

    def make_dialogue(dial_index: int, plan: dict) -> GroundedExample:
        entity, topic = plan["entity"], plan["topic"]
        span = plan["span"]
        turns: list[DialogueTurn] = [
            DialogueTurn("user", f"hello, i have a question about {topic} cover."),
            DialogueTurn(
                "agent",
                f"sure, i can help with {topic} plans. which plan are you "
                "interested in?",
            ),
        ]
        question = rng.choice(
            [
                f"how many credits does the {entity} plan cost?",
                f"what does the {entity} plan cost in {topic}?",
                f"please tell me the cost of the {entity} plan.",
            ]
        )
        turns.append(DialogueTurn("user", question))
        return GroundedExample(
            example_id=f"dial{dial_index:04d}:{len(turns) - 1}",
            context=DialogueContext(tuple(turns)),
            positive_passage_ids=frozenset({plan["passage_id"]}),
            gold_span=span,
            gold_answer=span,
            # in-cluster passages that never mention the queried plan: they
            # teach that topic overlap alone is not relevance
            hard_negative_ids=frozenset(plan["hard_negative_ids"]),
        )

    n_plans = len(plans)
    examples: list[GroundedExample] = []
    for i in range(n_dialogues):
        # first pass covers every plan so dev questions are about seen plans
        plan = plans[i] if i < n_plans else plans[rng.randrange(n_plans)]
        examples.append(make_dialogue(i, plan))

    split_at = len(examples) - n_dev
    return SyntheticCorpus(
        documents=documents,
        passages=passages,
        train_examples=examples[:split_at],
        dev_examples=examples[split_at:],
    )


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> dict[str, Path]:
    """Emit documents.jsonl and dialogues.jsonl in the ingestion schemas."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs_path = out_dir / "documents.jsonl"
    dials_path = out_dir / "dialogues.jsonl"

    with open(docs_path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(
                json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "title": doc.title,
                        "body": doc.body,
                        "meta": doc.source_meta,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    with open(dials_path, "w", encoding="utf-8") as fh:
        for ex in corpus.train_examples + corpus.dev_examples:
            dial_id, turn_index = ex.example_id.split(":")
            fh.write(
                json.dumps(
                    {
                        "dial_id": dial_id,
                        "turns": [
                            {"role": t.role, "text": t.text} for t in ex.context.turns
                        ],
                        "grounding": [
                            {
                                "turn_index": int(turn_index),
                                "positive_passage_ids": sorted(ex.positive_passage_ids),
                                "span": ex.gold_span,
                                "answer": ex.gold_answer,
                                "hard_negative_ids": sorted(ex.hard_negative_ids),
                            }
                        ],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return {"documents": docs_path, "dialogues": dials_path}
