"""Exhaustive dataset synthesis: enumerate, canonicalize, split, persist.

A dataset is every distinct parse tree up to a node-count bound over a
chosen operator alphabet, partitioned into semantic equivalence classes.
Classes are optionally capped by uniform subsampling, 20% of the eligible
classes are held out wholesale as unseen-equivalence-class test data, and
the members of each remaining class are split 60/15/25 into
train/valid/seen_test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .expr import Domain, Expr, OpSignature, parse, print_infix
from .rng import SplitMix64
from .semantics import equiv_key

SPLITS = ("train", "valid", "seen_test", "unseen_test")


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for one dataset; every derived artifact is a pure function
    of these fields."""

    domain: Domain
    operators: tuple[str, ...]
    variables: tuple[str, ...]
    max_size: int
    per_class_cap: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_size < 1:
            raise ValueError("max_size must be >= 1")
        if not self.variables:
            raise ValueError("variables must be non-empty")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variables")
        table = self.domain.operators
        for name in self.operators:
            if name not in table:
                raise ValueError(f"operator {name!r} not valid for domain {self.domain.value}")
        if self.per_class_cap is not None and self.per_class_cap < 1:
            raise ValueError("per_class_cap must be >= 1")

    def signatures(self) -> list[OpSignature]:
        return [self.domain.operators[name] for name in self.operators]

    def to_json(self) -> dict:
        return {
            "domain": self.domain.value,
            "operators": list(self.operators),
            "variables": list(self.variables),
            "max_size": self.max_size,
            "per_class_cap": self.per_class_cap,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetSpec":
        return cls(
            domain=Domain.from_name(obj["domain"]),
            operators=tuple(obj["operators"]),
            variables=tuple(obj["variables"]),
            max_size=int(obj["max_size"]),
            per_class_cap=obj.get("per_class_cap"),
            seed=int(obj.get("seed", 0)),
        )


# Named presets for the standard benchmark dataset families.
PRESETS: dict[str, DatasetSpec] = {
    "bool5": DatasetSpec(Domain.BOOLEAN, ("and", "or", "not", "xor", "implies"), ("a", "b", "c"), 5),
    "bool8": DatasetSpec(Domain.BOOLEAN, ("and", "or", "not", "xor", "implies"), ("a", "b", "c"), 8),
    "bool10": DatasetSpec(Domain.BOOLEAN, ("and", "or", "not", "xor", "implies"), ("a", "b", "c"), 10),
    "simpbool8": DatasetSpec(Domain.BOOLEAN, ("and", "or", "not"), ("a", "b", "c"), 8),
    "simpbool10": DatasetSpec(Domain.BOOLEAN, ("and", "or", "not"), ("a", "b", "c"), 10),
    "poly5": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub", "mul"), ("a", "b", "c"), 5),
    "poly8": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub", "mul"), ("a", "b", "c"), 8),
    "simppoly5": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub"), ("a", "b", "c"), 5),
    "simppoly8": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub"), ("a", "b", "c"), 8),
    "simppoly10": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub"), ("a", "b", "c"), 10),
    "onev-poly10": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub", "mul"), ("a",), 10),
    "onev-poly13": DatasetSpec(Domain.POLYNOMIAL, ("add", "sub", "mul"), ("a",), 13),
}


@dataclass
class EquivClass:
    key: str
    members: list[Expr]


@dataclass(frozen=True)
class DatasetRecord:
    expr: str
    class_id: str
    size: int
    split: str


@dataclass(frozen=True)
class DatasetStats:
    num_classes: int
    num_exprs: int
    entropy_bits: float


@dataclass
class Dataset:
    """Split records plus the spec they were generated from."""

    spec: DatasetSpec
    records: list[DatasetRecord] = field(default_factory=list)

    def by_split(self, *splits: str) -> list[DatasetRecord]:
        wanted = set(splits)
        return [r for r in self.records if r.split in wanted]


def enumerate_all(spec: DatasetSpec, max_count: int | None = None) -> list[Expr]:
    """Every distinct AST with size ≤ max_size, ordered by (size, text).

    Dynamic programming over exact size: the band of size s combines the
    variables (s=1), unary operators over band s-1, and binary operators
    over all band pairs (i, j) with i+j = s-1.  ``max_count`` guards
    against accidentally huge requests.
    """
    unary = [sig for sig in spec.signatures() if sig.arity == 1]
    binary = [sig for sig in spec.signatures() if sig.arity == 2]

    bands: list[list[Expr]] = [[]]
    total = 0
    for s in range(1, spec.max_size + 1):
        if s == 1:
            band = [Expr(v) for v in sorted(spec.variables)]
        else:
            band = []
            for sig in unary:
                band.extend(Expr(sig.name, (c,)) for c in bands[s - 1])
            for sig in binary:
                for i in range(1, s - 1):
                    j = s - 1 - i
                    band.extend(
                        Expr(sig.name, (l, r)) for l in bands[i] for r in bands[j]
                    )
        band.sort(key=print_infix)
        total += len(band)
        if max_count is not None and total > max_count:
            raise ResourceWarning(
                f"enumeration exceeds the cap of {max_count} expressions at size {s}"
            )
        bands.append(band)
    return [e for band in bands[1:] for e in band]


def count_by_size(
    num_vars: int, num_unary: int, num_binary: int, max_size: int
) -> list[int]:
    """Closed-form enumeration counts per size from the convolution
    recurrence N(s) = [s=1]·|vars| + |unary|·N(s−1) + |binary|·Σ N(i)N(s−1−i)."""
    n = [0] * (max_size + 1)
    for s in range(1, max_size + 1):
        if s == 1:
            n[s] = num_vars
            continue
        total = num_unary * n[s - 1]
        total += num_binary * sum(n[i] * n[s - 1 - i] for i in range(1, s - 1))
        n[s] = total
    return n[1:]


def group_classes(exprs: list[Expr], order: tuple[str, ...], domain: Domain) -> list[EquivClass]:
    """Partition by equivalence key; classes sorted by key, members keep
    enumeration order."""
    groups: dict[str, list[Expr]] = {}
    for e in exprs:
        groups.setdefault(equiv_key(e, order, domain), []).append(e)
    return [EquivClass(k, groups[k]) for k in sorted(groups)]


def subsample_classes(classes: list[EquivClass], cap: int, seed: int) -> list[EquivClass]:
    """Reduce each class to ≤ cap members, uniform without replacement.

    Each class draws from its own stream (keyed by the class index) so the
    result is independent of how many other classes were capped.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    out: list[EquivClass] = []
    for ci, c in enumerate(classes):
        if len(c.members) <= cap:
            out.append(EquivClass(c.key, list(c.members)))
        else:
            rng = SplitMix64(seed ^ (0xC0FFEE * (ci + 1)))
            picked = rng.sample_indices(len(c.members), cap)
            out.append(EquivClass(c.key, [c.members[i] for i in sorted(picked)]))
    return out


def split(
    classes: list[EquivClass],
    seed: int,
    eligibility_mean: float | None = None,
) -> list[DatasetRecord]:
    """Assign every member to exactly one of the four splits.

    20% of the classes (rounded down, at least one) are drawn uniformly
    from the eligible ones (at least two members, fewer than three times
    the mean members per class) and held out wholesale as unseen_test.
    Remaining classes shuffle their members and take ⌈0.6m⌉ train,
    ⌊0.15m⌋ valid, rest seen_test.  ``eligibility_mean`` overrides the
    mean class size used by the filter (callers pass the pre-cap mean).
    """
    if len(classes) < 5:
        raise ValueError("need at least 5 classes to split")
    mean = eligibility_mean
    if mean is None:
        mean = sum(len(c.members) for c in classes) / len(classes)
    eligible = [i for i, c in enumerate(classes) if 2 <= len(c.members) < 3 * mean]
    if not eligible:
        raise ValueError("no class is eligible for the unseen split")
    want = max(1, int(0.20 * len(classes)))
    rng = SplitMix64(seed)
    if want >= len(eligible):
        unseen = set(eligible)
    else:
        picked = rng.sample_indices(len(eligible), want)
        unseen = {eligible[i] for i in picked}

    records: list[DatasetRecord] = []
    for i, c in enumerate(classes):
        if i in unseen:
            for e in c.members:
                records.append(DatasetRecord(print_infix(e), c.key, e.size, "unseen_test"))
            continue
        members = list(c.members)
        rng.shuffle(members)
        m = len(members)
        n_train = math.ceil(0.60 * m)
        n_valid = math.floor(0.15 * m)
        for j, e in enumerate(members):
            if j < n_train:
                tag = "train"
            elif j < n_train + n_valid:
                tag = "valid"
            else:
                tag = "seen_test"
            records.append(DatasetRecord(print_infix(e), c.key, e.size, tag))
    return records


def stats(records: list[DatasetRecord]) -> DatasetStats:
    """Class count, expression count, and class entropy in bits."""
    if not records:
        raise ValueError("no records")
    counts: dict[str, int] = {}
    for r in records:
        counts[r.class_id] = counts.get(r.class_id, 0) + 1
    n = len(records)
    h = -sum((c / n) * math.log2(c / n) for c in counts.values())
    return DatasetStats(len(counts), n, h)


def generate(spec: DatasetSpec, max_count: int | None = None) -> Dataset:
    """Full pipeline: enumerate → group → cap → split."""
    exprs = enumerate_all(spec, max_count=max_count)
    classes = group_classes(exprs, spec.variables, spec.domain)
    pre_cap_mean = sum(len(c.members) for c in classes) / len(classes)
    if spec.per_class_cap is not None:
        classes = subsample_classes(classes, spec.per_class_cap, spec.seed)
    records = split(classes, spec.seed, eligibility_mean=pre_cap_mean)
    return Dataset(spec, records)


def write_jsonl(dataset: Dataset, path: str) -> None:
    """One JSON object per line, preceded by a ``#`` comment line that
    carries the generating spec (read back by :func:`read_jsonl`)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + json.dumps({"spec": dataset.spec.to_json()}, sort_keys=True) + "\n")
        for r in dataset.records:
            f.write(
                json.dumps(
                    {"expr": r.expr, "class": r.class_id, "size": r.size, "split": r.split},
                    sort_keys=True,
                )
                + "\n"
            )


def read_jsonl(path: str) -> Dataset:
    """Inverse of :func:`write_jsonl`; malformed lines are reported with
    their 1-based line number."""
    spec: DatasetSpec | None = None
    records: list[DatasetRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                try:
                    meta = json.loads(line[1:])
                    if isinstance(meta, dict) and "spec" in meta:
                        spec = DatasetSpec.from_json(meta["spec"])
                except json.JSONDecodeError:
                    pass
                continue
            try:
                obj = json.loads(line)
                records.append(
                    DatasetRecord(obj["expr"], obj["class"], int(obj["size"]), obj["split"])
                )
                if records[-1].split not in SPLITS:
                    raise ValueError(f"unknown split {records[-1].split!r}")
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from None
    if spec is None:
        raise ValueError(f"{path}: missing spec header comment")
    return Dataset(spec, records)


def parse_records(dataset: Dataset) -> list[tuple[Expr, str, str]]:
    """Records as (tree, class_id, split) triples."""
    return [
        (parse(r.expr, dataset.spec.domain), r.class_id, r.split) for r in dataset.records
    ]
