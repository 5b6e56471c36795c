"""Smoke test for the pysemrel extension module.

Build the module first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or copy target/<profile>/libpysemrel.so next to this script as pysemrel.so.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pysemrel  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "fixtures")


def fixture(name):
    return os.path.join(FIXTURES, name)


def main():
    kb = pysemrel.KnowledgeBase.from_files(fixture("kb_concepts.txt"), fixture("kb_relations.txt"))
    assert kb.concept_count == 10 and kb.relation_count == 8
    assert kb.relations_between("C0027051", "C0004057") == [("C0004057", "treats", "C0027051")]

    tokens = pysemrel.tokenize("Beta-blockers, e.g. atenolol.")
    assert [t[1] for t in tokens] == ["beta-blockers", "e", "g", "atenolol"], tokens
    sentences = pysemrel.split_sentences("Aspirin helps. Dr. Smith agreed.")
    assert [s[3] for s in sentences] == ["Aspirin helps.", "Dr. Smith agreed."], sentences

    lexicon = pysemrel.Lexicon(kb)
    assert len(lexicon) == 23 and lexicon.max_phrase_len == 3
    mentions = lexicon.link("Aspirin after a heart attack")
    assert [m[0] for m in mentions] == ["C0004057", "C0027051"], mentions
    assert lexicon.extract(kb, "Aspirin after a heart attack") == [("C0004057", "treats", "C0027051")]

    scores = pysemrel.bm25([("a", ["x", "y"]), ("b", ["y"]), ("c", ["z"])], ["x"])
    assert [d for d, _ in scores] == ["a"]

    value = pysemrel.ndcg(["A", "B", "C"], {"A": 2, "C": 1})
    assert abs(value - 0.963940) < 1e-6, value
    assert pysemrel.ndcg(["A"], {"A": 0}) is None

    t, df, p, n = pysemrel.paired_t_test([0.1, 0.2, 0.3], [0.0, 0.0, 0.0])
    assert abs(t - 3.464102) < 1e-6 and df == 2 and abs(p - 0.074180) < 1e-3 and n == 3

    engine = pysemrel.Engine(fixture("corpus.ohsumed"), fixture("topics.txt"), kb)
    assert engine.topic_ids() == ["OHSU1", "OHSU2", "OHSU3", "OHSU4"]
    assert engine.rank("OHSU3") is None
    ranked = engine.rank("OHSU1")
    assert ranked and all(s > 0 for _, s in ranked)
    words = engine.rank("OHSU3", repr="bow", granularity="doc")
    assert words, "word ranking should retrieve documents"
    per_topic = dict(engine.evaluate(fixture("qrels.txt")))
    assert per_topic["OHSU3"] is None and per_topic["OHSU4"] is None
    assert all(0.0 <= per_topic[t] <= 1.0 for t in ("OHSU1", "OHSU2"))

    try:
        engine.rank("OHSU1", repr="bow", granularity="passage")
    except ValueError:
        pass
    else:
        raise AssertionError("bow/passage must be rejected")

    with tempfile.TemporaryDirectory() as tmp:
        bad = os.path.join(tmp, "bad.tsv")
        with open(bad, "w") as fh:
            fh.write("D1\t0\tC1\ttreats\tC1\tlearned\t0.5\n")
        try:
            pysemrel.read_annotations(bad)
        except pysemrel.MalformedInputError as err:
            assert "object_cui" in str(err)
        else:
            raise AssertionError("self-relation must be rejected")

    mean = sum(per_topic[t] for t in ("OHSU1", "OHSU2")) / 2
    assert not math.isnan(mean)
    print("pysemrel smoke test passed: mean nDCG (BoR, passage) = %.6f" % mean)


if __name__ == "__main__":
    main()
