import io
import os
import random

import pytest

from folkrec.corpus import (DatasetFormatConfig, ParseError, Triple, ValidationError,
                            build, fixed_split_from_corpus, leave_post_out,
                            load_fixed_split, load_snapshot, p_core, parse_triples,
                            save_snapshot)

from oracles import p_core_oracle, p_core_scan_oracle, satisfies_core
from synthdata import random_triples


def T(u, i, t):
    return Triple(u, i, t)


class TestParseTriples:
    def test_duplicate_rows_collapse(self):
        res = parse_triples(io.StringIO("u1\ti1\ttag1\nu1\ti1\ttag1\n"))
        assert len(res.triples) == 1
        assert res.collapsed_duplicates == 1

    def test_empty_source_is_empty_list(self):
        res = parse_triples(io.StringIO(""))
        assert res.triples == []

    def test_column_remap_matches_canonical_order(self):
        canonical = "u1\ti1\tt1\nu1\ti2\tt2\nu2\ti1\tt1\nu2\ti2\tt3\nu3\ti3\tt2\n"
        shuffled = "\n".join("\t".join((t, u, i)) for u, i, t in
                             (row.split("\t") for row in canonical.strip().split("\n"))) + "\n"
        a = parse_triples(io.StringIO(canonical))
        b = parse_triples(io.StringIO(shuffled),
                          DatasetFormatConfig(user_col=1, item_col=2, tag_col=0))
        assert a.triples == b.triples
        assert a.vocab.users == b.vocab.users
        assert a.vocab.tags == b.vocab.tags

    def test_malformed_row_reports_line_number(self):
        with pytest.raises(ParseError) as err:
            parse_triples(io.StringIO("u1\ti1\tt1\nu2\ti2\n"))
        assert err.value.line_number == 2
        assert "line 2" in str(err.value)

    def test_header_and_lowercase(self):
        src = "user\titem\ttag\nu1\ti1\tJava\n"
        res = parse_triples(io.StringIO(src), DatasetFormatConfig(has_header=True))
        assert res.vocab.tags == ["java"]
        res = parse_triples(io.StringIO(src),
                            DatasetFormatConfig(has_header=True, lowercase_tags=False))
        assert res.vocab.tags == ["Java"]

    def test_case_collapse_merges_tags(self):
        res = parse_triples(io.StringIO("u1\ti1\tJava\nu2\ti1\tjava\n"))
        assert len(res.vocab.tags) == 1

    def test_distinct_columns_required(self):
        with pytest.raises(ValueError):
            DatasetFormatConfig(user_col=0, item_col=0, tag_col=2)

    def test_blank_lines_skipped(self):
        res = parse_triples(io.StringIO("u1\ti1\tt1\n\n\nu2\ti1\tt1\n"))
        assert len(res.triples) == 2

    @pytest.mark.skipif("FOLKREC_BIBSON5" not in os.environ,
                        reason="set FOLKREC_BIBSON5 to the raw bibson5 file to check "
                               "the published corpus statistics")
    def test_bibson5_statistics(self):
        res = parse_triples(os.environ["FOLKREC_BIBSON5"])
        f = build(res.triples)
        stats = f.stats()
        assert stats["users"] == 116
        assert stats["items"] == 361
        assert stats["tags"] == 412
        assert stats["posts"] == 2526


class TestPCore:
    def test_p1_returns_input_unchanged(self):
        triples = random_triples(random.Random(1), n=25)
        assert p_core(triples, 1) == triples

    def test_single_post_user_removed_remainder_stable(self):
        # three users share items i1, i3 (each item has 3 posts); u0 has
        # a single post on i1, which is the only thing p=2 removes
        stable = [T(u, i, t) for u in (1, 2, 3) for i, t in ((1, 1), (3, 3))]
        triples = stable + [T(0, 1, 1)]
        result = p_core(triples, 2)
        assert sorted(result) == sorted(stable)
        assert set(result) == p_core_oracle(triples, 2)

    def test_idempotent(self):
        for seed in range(20):
            triples = random_triples(random.Random(seed), n=18)
            once = p_core(triples, 2)
            assert p_core(once, 2) == once

    def test_result_satisfies_core_property(self):
        for seed in range(30):
            for p in (2, 3):
                result = p_core(random_triples(random.Random(seed), n=18), p)
                assert satisfies_core(result, p)

    def test_monotone_in_p(self):
        for seed in range(15):
            triples = random_triples(random.Random(seed), n=20)
            cores = {p: set(p_core(triples, p)) for p in (1, 2, 3, 4)}
            assert cores[4] <= cores[3] <= cores[2] <= cores[1]

    def test_matches_exhaustive_subset_oracle(self):
        rng = random.Random(7)
        for _ in range(25):
            triples = random_triples(rng, n_users=3, n_items=3, n_tags=3, n=8)
            for p in (2, 3):
                assert set(p_core(triples, p)) == p_core_oracle(triples, p)

    def test_matches_full_scan_fixpoint_at_scale(self):
        rng = random.Random(8)
        for _ in range(60):
            triples = random_triples(rng, n_users=15, n_items=15, n_tags=12,
                                     n=rng.randint(30, 160))
            for p in (2, 3, 5):
                assert p_core(triples, p) == p_core_scan_oracle(triples, p)

    def test_rejects_nonpositive_p(self):
        with pytest.raises(ValueError):
            p_core([T(0, 0, 0)], 0)


class TestBuild:
    def test_empty(self):
        f = build([])
        assert f.stats() == {"users": 0, "items": 0, "tags": 0, "posts": 0, "triples": 0}

    def test_hand_fixture_indices(self):
        f = build([T(1, 1, 1), T(2, 1, 1), T(2, 2, 2)])
        assert f.users_of_tag[1] == {1, 2}
        assert f.items_of_tag[2] == {2}
        assert f.tf(1, 1) == 2
        assert f.user_profile[2] == {1, 2}

    def test_indices_consistent_with_triples(self):
        for seed in range(10):
            triples = random_triples(random.Random(seed), n=30)
            for current in (triples, p_core(triples, 2)):
                f = build(current)
                s = set(current)
                assert f.users_of_tag == _group(s, lambda tr: (tr.tag, tr.user))
                assert f.items_of_tag == _group(s, lambda tr: (tr.tag, tr.item))
                assert f.user_profile == _group(s, lambda tr: (tr.user, tr.tag))
                assert f.item_profile == _group(s, lambda tr: (tr.item, tr.tag))
                assert f.posts == _group(s, lambda tr: ((tr.user, tr.item), tr.tag))
                for (t, i), n in f.tag_item_freq.items():
                    assert n == sum(1 for tr in s if tr.tag == t and tr.item == i)
                assert len(f.users) == len({tr.user for tr in s})
                assert len(f.items) == len({tr.item for tr in s})
                assert len(f.tags) == len({tr.tag for tr in s})

    def test_duplicate_triples_deduped(self):
        f = build([T(0, 0, 0), T(0, 0, 0)])
        assert len(f.triples) == 1


def _group(triples, key):
    out = {}
    for tr in triples:
        k, v = key(tr)
        out.setdefault(k, set()).add(v)
    return out


class TestLeavePostOut:
    def test_single_user_three_posts(self):
        f = build([T(0, 0, 0), T(0, 1, 1), T(0, 2, 0)])
        split = leave_post_out(f, seed=3)
        assert len(split.test) == 1
        assert split.train.n_posts == 2

    def test_deterministic_for_seed(self):
        f = build(random_triples(random.Random(5), n=40))
        a = leave_post_out(f, seed=11)
        b = leave_post_out(f, seed=11)
        assert a.test == b.test
        assert a.train.triples == b.train.triples

    def test_fifty_user_recount(self):
        rng = random.Random(9)
        triples = random_triples(rng, n_users=50, n_items=40, n_tags=15, n=400)
        f = build(triples)
        split = leave_post_out(f, seed=1)
        assert len(split.test) == len(f.users)
        per_user = {}
        for u, i, tags in split.test:
            per_user[u] = per_user.get(u, 0) + 1
            assert (u, i) not in split.train.posts
            assert tags == frozenset(f.posts[(u, i)])
        assert all(n == 1 for n in per_user.values())
        # the union of train triples and test posts' triples is the corpus
        test_triples = {T(u, i, t) for u, i, tags in split.test for t in tags}
        assert set(split.train.triples) | test_triples == set(f.triples)

    def test_different_seeds_differ(self):
        f = build(random_triples(random.Random(2), n_users=20, n=200))
        a = leave_post_out(f, seed=0)
        b = leave_post_out(f, seed=1)
        assert a.test != b.test


class TestFixedSplit:
    def test_unknown_tag_in_test_is_named(self):
        train = "u1\ti1\tt1\nu2\ti1\tt1\nu1\ti2\tt2\n"
        test = "u2\ti2\tmystery\n"
        with pytest.raises(ValidationError, match="mystery"):
            load_fixed_split(io.StringIO(train), io.StringIO(test))

    def test_empty_test_file(self):
        split = load_fixed_split(io.StringIO("u1\ti1\tt1\n"), io.StringIO(""))
        assert split.test == []

    def test_posts_grouped_and_disjoint_from_train(self):
        train = "u1\ti1\tt1\nu2\ti1\tt2\nu1\ti2\tt2\n"
        test = "u2\ti2\tt1\nu2\ti2\tt2\n"
        split = load_fixed_split(io.StringIO(train), io.StringIO(test))
        assert len(split.test) == 1
        (u, i, tags) = split.test[0]
        assert len(tags) == 2

    def test_test_post_overlapping_train_rejected(self):
        train = "u1\ti1\tt1\nu2\ti1\tt2\n"
        test = "u1\ti1\tt2\n"
        with pytest.raises(ValidationError):
            load_fixed_split(io.StringIO(train), io.StringIO(test))

    def test_from_existing_corpus(self):
        parsed = parse_triples(io.StringIO("u1\ti1\tt1\nu2\ti1\tt1\nu2\ti2\tt2\n"))
        train = build(parsed.triples)
        split = fixed_split_from_corpus(train, parsed.vocab, io.StringIO("u1\ti2\tt2\n"))
        assert len(split.test) == 1


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        src = "alice\tbase64\tPython\nbob\tbase64\tpython\nbob\tregex\ttools\n"
        parsed = parse_triples(io.StringIO(src))
        f = build(parsed.triples)
        path = tmp_path / "corpus.snap"
        save_snapshot(f, parsed.vocab, path)
        loaded, vocab = load_snapshot(path)
        assert set(loaded.triples) == set(f.triples)
        assert vocab.users == parsed.vocab.users
        assert vocab.items == parsed.vocab.items
        assert vocab.tags == parsed.vocab.tags

    def test_rewrite_is_byte_identical(self, tmp_path):
        parsed = parse_triples(io.StringIO("u1\ti1\tt1\nu2\ti1\tt2\n"))
        f = build(parsed.triples)
        p1, p2 = tmp_path / "a.snap", tmp_path / "b.snap"
        save_snapshot(f, parsed.vocab, p1)
        save_snapshot(f, parsed.vocab, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.snap"
        path.write_text("not a snapshot\n")
        with pytest.raises(ValidationError):
            load_snapshot(path)
