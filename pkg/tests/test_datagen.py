import json
import math
import warnings

import pytest

from semvec import datagen
from semvec.datagen import (
    PRESETS,
    Dataset,
    DatasetSpec,
    EquivClass,
    count_by_size,
    enumerate_all,
    generate,
    group_classes,
    read_jsonl,
    split,
    stats,
    subsample_classes,
    write_jsonl,
)
from semvec.expr import Domain, parse, print_infix


def brute_trees(variables, unary, binary, max_size):
    """Plain recursive enumeration used as an oracle for the DP."""
    by_size = {1: {v for v in variables}}
    for s in range(2, max_size + 1):
        acc = set()
        for u in unary:
            acc.update(f"({u} {t})" for t in by_size[s - 1])
        for bop in binary:
            for i in range(1, s - 1):
                for l in by_size[i]:
                    for r in by_size[s - 1 - i]:
                        acc.add(f"({l} {bop} {r})")
        by_size[s] = acc
    return by_size


@pytest.mark.parametrize(
    "domain,ops,variables,max_size",
    [
        (Domain.BOOLEAN, ("and", "not"), ("a", "b"), 5),
        (Domain.BOOLEAN, ("and", "or", "not", "xor", "implies"), ("a", "b", "c"), 4),
        (Domain.POLYNOMIAL, ("add", "mul"), ("a",), 6),
        (Domain.POLYNOMIAL, ("add", "sub", "mul"), ("a", "b"), 5),
    ],
)
def test_enumeration_matches_brute_force(domain, ops, variables, max_size):
    spec = DatasetSpec(domain, ops, variables, max_size)
    sigs = spec.signatures()
    unary = [s.symbol for s in sigs if s.arity == 1]
    binary = [s.symbol for s in sigs if s.arity == 2]
    oracle = brute_trees(variables, unary, binary, max_size)
    got = enumerate_all(spec)
    assert len(got) == len(set(got)) == sum(len(v) for v in oracle.values())
    assert {print_infix(e) for e in got} == set().union(*oracle.values())
    counts = count_by_size(len(variables), len(unary), len(binary), max_size)
    assert counts == [len(oracle[s]) for s in range(1, max_size + 1)]


def test_enumeration_sorted_within_size_bands():
    exprs = enumerate_all(PRESETS["simppoly5"])
    sizes = [e.size for e in exprs]
    assert sizes == sorted(sizes)
    for s in set(sizes):
        band = [print_infix(e) for e in exprs if e.size == s]
        assert band == sorted(band)


def test_enumeration_cap_raises():
    with pytest.raises(ResourceWarning):
        enumerate_all(PRESETS["bool5"], max_count=100)


def test_bool5_statistics():
    ds = generate(PRESETS["bool5"])
    st = stats(ds.records)
    assert st.num_classes == 95
    assert st.num_exprs == 1239
    assert abs(st.entropy_bits - 5.6) < 0.1


def test_simppoly5_statistics():
    ds = generate(PRESETS["simppoly5"])
    st = stats(ds.records)
    assert st.num_classes == 47
    assert st.num_exprs == 237
    assert abs(st.entropy_bits - 5.0) < 0.1


def test_records_cover_enumeration_exactly():
    spec = PRESETS["simppoly5"]
    ds = generate(spec)
    assert sorted(r.expr for r in ds.records) == sorted(
        print_infix(e) for e in enumerate_all(spec)
    )
    for r in ds.records:
        assert r.size == parse(r.expr, spec.domain).size


def test_unseen_classes_are_disjoint_and_whole():
    ds = generate(PRESETS["bool5"])
    unseen = {r.class_id for r in ds.by_split("unseen_test")}
    seen = {r.class_id for r in ds.by_split("train", "valid", "seen_test")}
    assert unseen and not (unseen & seen)
    # 20% of classes rounded down
    assert len(unseen) == int(0.20 * (len(unseen) + len(seen)))


def test_per_class_split_ratios():
    ds = generate(PRESETS["bool5"])
    per_class = {}
    for r in ds.records:
        if r.split != "unseen_test":
            per_class.setdefault(r.class_id, []).append(r.split)
    for cid, tags in per_class.items():
        m = len(tags)
        want_train = math.ceil(0.60 * m)
        want_valid = math.floor(0.15 * m)
        assert tags.count("train") == want_train, cid
        assert tags.count("valid") == want_valid, cid
        assert tags.count("seen_test") == m - want_train - want_valid, cid


def test_split_rounding_examples():
    def mk(n, key):
        return EquivClass(key, [parse("a", Domain.BOOLEAN)] * n)

    classes = [mk(10, "k0"), mk(1, "k1"), mk(2, "k2"), mk(4, "k3"), mk(3, "k4"), mk(7, "k5")]
    records = split(classes, seed=0)
    tags = {}
    for r in records:
        tags.setdefault(r.class_id, []).append(r.split)
    for key, n, want in [("k0", 10, (6, 1, 3)), ("k1", 1, (1, 0, 0)), ("k3", 4, (3, 0, 1))]:
        if "unseen_test" in tags[key]:
            continue  # this class was drawn as held out instead
        got = (tags[key].count("train"), tags[key].count("valid"), tags[key].count("seen_test"))
        assert got == want, key


def test_split_eligibility_window():
    ds = generate(PRESETS["bool5"])
    sizes = {}
    for r in ds.records:
        sizes[r.class_id] = sizes.get(r.class_id, 0) + 1
    mean = sum(sizes.values()) / len(sizes)
    for cid in {r.class_id for r in ds.by_split("unseen_test")}:
        assert 2 <= sizes[cid] < 3 * mean


def test_split_needs_five_classes():
    classes = [EquivClass(f"k{i}", [parse("a", Domain.BOOLEAN)] * 3) for i in range(4)]
    with pytest.raises(ValueError):
        split(classes, seed=0)


def test_subsample_cap_and_determinism():
    spec = PRESETS["simppoly5"]
    classes = group_classes(enumerate_all(spec), spec.variables, spec.domain)
    capped = subsample_classes(classes, 4, seed=11)
    again = subsample_classes(classes, 4, seed=11)
    other = subsample_classes(classes, 4, seed=12)
    for before, c1, c2 in zip(classes, capped, again):
        assert len(c1.members) == min(4, len(before.members))
        assert set(map(print_infix, c1.members)) <= set(map(print_infix, before.members))
        assert c1.members == c2.members
    assert any(c1.members != c3.members for c1, c3 in zip(capped, other))


def test_subsample_streams_do_not_interfere():
    spec = PRESETS["simppoly5"]
    classes = group_classes(enumerate_all(spec), spec.variables, spec.domain)
    full = subsample_classes(classes, 3, seed=5)
    prefix = subsample_classes(classes[:10], 3, seed=5)
    for a, b in zip(prefix, full[:10]):
        assert a.members == b.members


def test_generate_deterministic_bytes(tmp_path):
    spec = DatasetSpec(Domain.POLYNOMIAL, ("add", "sub"), ("a", "b", "c"), 5, per_class_cap=3, seed=7)
    p1, p2 = tmp_path / "d1.jsonl", tmp_path / "d2.jsonl"
    write_jsonl(generate(spec), str(p1))
    write_jsonl(generate(spec), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_jsonl_round_trip(tmp_path):
    ds = generate(PRESETS["simppoly5"])
    path = tmp_path / "data.jsonl"
    write_jsonl(ds, str(path))
    back = read_jsonl(str(path))
    assert back.spec == ds.spec
    assert back.records == ds.records
    first = path.read_text().splitlines()[0]
    assert first.startswith("# ")
    assert json.loads(first[1:])["spec"]["max_size"] == 5


def test_read_jsonl_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '# {"spec": {"domain": "poly", "operators": ["add"], "variables": ["a"], "max_size": 3}}\n'
        '{"expr": "a", "class": "P:1:1=1", "size": 1, "split": "train"}\n'
        '{"expr": "a", "class": "P:1:1=1", "size": 1, "split": "nope"}\n'
    )
    with pytest.raises(ValueError, match=":3:"):
        read_jsonl(str(path))


def test_read_jsonl_requires_spec_header(tmp_path):
    path = tmp_path / "headless.jsonl"
    path.write_text('{"expr": "a", "class": "c", "size": 1, "split": "train"}\n')
    with pytest.raises(ValueError, match="spec"):
        read_jsonl(str(path))


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(Domain.BOOLEAN, ("add",), ("a",), 3)
    with pytest.raises(ValueError):
        DatasetSpec(Domain.BOOLEAN, ("and",), (), 3)
    with pytest.raises(ValueError):
        DatasetSpec(Domain.BOOLEAN, ("and",), ("a", "a"), 3)
    with pytest.raises(ValueError):
        DatasetSpec(Domain.BOOLEAN, ("and",), ("a",), 0)
    with pytest.raises(ValueError):
        DatasetSpec(Domain.BOOLEAN, ("and",), ("a",), 3, per_class_cap=0)


def test_spec_json_round_trip():
    spec = PRESETS["bool8"]
    assert DatasetSpec.from_json(spec.to_json()) == spec


def test_entropy_of_uniform_classes():
    # 4 classes with equal mass carry exactly 2 bits
    from semvec.datagen import DatasetRecord

    recs = [DatasetRecord("a", f"k{i}", 1, "train") for i in range(4) for _ in range(5)]
    assert abs(stats(recs).entropy_bits - 2.0) < 1e-12
