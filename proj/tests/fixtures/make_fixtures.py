#!/usr/bin/env python3
"""Regenerates the bundled smoke fixtures. Output is committed; rerun only when the generator changes."""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent
rng = random.Random(42)

# lemma -> past-tense form
VERBS = {
    "seek": "sought", "pass": "passed", "raise": "raised", "cut": "cut", "sign": "signed",
    "block": "blocked", "hire": "hired", "fund": "funded", "arrest": "arrested", "deport": "deported",
    "patrol": "patrolled", "build": "built", "file": "filed", "appeal": "appealed", "overturn": "overturned",
    "issue": "issued", "challenge": "challenged", "repeal": "repealed",
}
SUBJECTS = ["senator", "governor", "agency", "court", "council", "mayor", "company", "union"]

FRAMES = {
    "economic": [("raise", "wage"), ("cut", "tax"), ("hire", "worker"), ("fund", "program"), ("sign", "contract"),
                 ("block", "tariff")],
    "legality": [("file", "lawsuit"), ("appeal", "ruling"), ("overturn", "ban"), ("challenge", "statute"),
                 ("pass", "legislation"), ("seek", "permit")],
    "security": [("arrest", "smuggler"), ("deport", "migrant"), ("patrol", "border"), ("build", "wall"),
                 ("issue", "warrant"), ("repeal", "amnesty")],
}


def active_sentence(subject, verb, obj):
    tokens = [
        (1, "The", "the", "DET", 2, "det"),
        (2, subject, subject, "NOUN", 3, "nsubj"),
        (3, VERBS[verb], verb, "VERB", 0, "root"),
        (4, "the", "the", "DET", 5, "det"),
        (5, obj, obj, "NOUN", 3, "obj"),
        (6, ".", ".", "PUNCT", 3, "punct"),
    ]
    return tokens


def passive_sentence(verb, obj):
    return [
        (1, "The", "the", "DET", 2, "det"),
        (2, obj, obj, "NOUN", 4, "nsubj:pass"),
        (3, "was", "be", "AUX", 4, "aux:pass"),
        (4, VERBS[verb], verb, "VERB", 0, "root"),
        (5, ".", ".", "PUNCT", 4, "punct"),
    ]


def conllu_block(tokens, comments):
    lines = [f"# {k} = {v}" for k, v in comments]
    for i, form, lemma, upos, head, rel in tokens:
        lines.append(f"{i}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{rel}\t_\t_")
    return "\n".join(lines) + "\n\n"


def text_of(tokens):
    return " ".join(t[1] for t in tokens)


def make_corpus():
    labels = list(FRAMES)
    records, conllu = [], []
    for d in range(20):
        frame = labels[d % len(labels)]
        doc_id = f"doc{d:02d}"
        pool = FRAMES[frame]
        other = [p for f, ps in FRAMES.items() if f != frame for p in ps]
        sentences = []
        for s in range(6):
            verb, obj = rng.choice(pool) if s < 4 else rng.choice(other)
            if rng.random() < 0.2:
                sentences.append(passive_sentence(verb, obj))
            else:
                sentences.append(active_sentence(rng.choice(SUBJECTS), verb, obj))
        text = " ".join(text_of(t) for t in sentences)
        label = frame if d < 18 else None
        records.append({"id": doc_id, "text": text, "domain": "immigration", "frame_label": label})
        block = f"# doc_id = {doc_id}\n"
        for i, tokens in enumerate(sentences):
            block += conllu_block(tokens, [("sent_id", f"{doc_id}-{i}"), ("text", text_of(tokens))])
        conllu.append(block)
    (OUT / "corpus.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))
    (OUT / "corpus.conllu").write_text("".join(conllu))


def phrase_tokens(subject, verb, obj, negated):
    tokens = [(1, subject, subject, "NOUN", 2, "nsubj")]
    if negated:
        tokens = [(1, subject, subject, "NOUN", 3, "nsubj"), (2, "not", "not", "PART", 3, "advmod"),
                  (3, verb, verb, "VERB", 0, "root"), (4, obj, obj, "NOUN", 3, "obj")]
    else:
        tokens += [(2, verb, verb, "VERB", 0, "root"), (3, obj, obj, "NOUN", 2, "obj")]
    return tokens


def make_kg():
    pairs = [p for ps in FRAMES.values() for p in ps]
    relations = ["Precedence", "Succession", "Synchronous", "Reason", "Result", "Conjunction", "Contrast"]
    edges, phrases = [], {}
    seen = set()
    while len(edges) < 180:
        h = rng.choice(pairs)
        t = rng.choice(pairs)
        if h == t:
            continue
        subject = rng.choice(SUBJECTS)
        negated = rng.random() < 0.1
        head = f"{subject} {'not ' if negated else ''}{h[0]} {h[1]}"
        tail = f"{rng.choice(SUBJECTS)} {t[0]} {t[1]}"
        if (head, tail) in seen:
            continue
        seen.add((head, tail))
        # The head verb decides the dominant relation so the label is learnable.
        dominant = relations[sorted(VERBS).index(h[0]) % len(relations)]
        counts = {dominant: rng.randint(2, 6)}
        if rng.random() < 0.3:
            counts[rng.choice(relations)] = counts.get(rng.choice(relations), 0) + 1
        edges.append({"head": head, "tail": tail, "relations": counts})
        phrases[head] = phrase_tokens(subject, h[0], h[1], negated)
        phrases[tail] = phrase_tokens(tail.split()[0], t[0], t[1], False)
    (OUT / "kg.jsonl").write_text("".join(json.dumps(e) + "\n" for e in edges))
    out = []
    for phrase, tokens in sorted(phrases.items()):
        out.append(conllu_block(tokens, [("text", phrase)]))
    (OUT / "kg_phrases.conllu").write_text("".join(out))


def make_vectors():
    words = set(SUBJECTS) | set(VERBS) | {o for ps in FRAMES.values() for _, o in ps} | {"not"}
    lines = []
    for w in sorted(words):
        lines.append(w + " " + " ".join(f"{rng.gauss(0, 1):.6f}" for _ in range(16)))
    (OUT / "vectors.txt").write_text("\n".join(lines) + "\n")


def make_config():
    config = {
        "seed": 42,
        "artifacts": "artifacts",
        "corpus": {"path": "corpus.jsonl", "parses": "corpus.conllu", "test_fraction": 0.25},
        "kg": {"path": "kg.jsonl", "phrase_parses": "kg_phrases.conllu", "min_unique_pairs": 5},
        "embedding": {"provider": "stub", "dimension": 32, "batch_size": 64},
        "generation": {"provider": "stub", "parallelism": 2},
        "static_vectors": "vectors.txt",
        "relation": {"hidden_dim": 32, "learning_rate": 0.01, "max_epochs": 30, "batch_size": 8, "folds": 3},
        "expansion": {"method": "llm"},
        "clustering": {"ks": [2, 3, 4]},
        "framing": {
            "lda": {"min_collection_freq": 1, "remove_top_words": 2, "iterations": 100, "infer_iterations": 20},
            "neural": {"learning_rate": 0.001, "max_epochs": 15, "seeds": [7, 14]},
        },
        "intrusion": {"items": 3},
        "mi": {"top": 3},
    }
    (OUT / "smoke_config.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    make_corpus()
    make_kg()
    make_vectors()
    make_config()
