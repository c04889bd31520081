"""Enumerate the small benchmark datasets and print their statistics.

Shows the exact class/expression counts per preset, the class-size
entropy, and the members of one equivalence class so the grouping is
visible at a glance.  Runs in a few seconds.
"""

from collections import Counter

from semvec.datagen import PRESETS, generate
from semvec import datagen


def describe(name: str) -> None:
    ds = generate(PRESETS[name])
    st = datagen.stats(ds.records)
    by_split = Counter(r.split for r in ds.records)
    print(f"{name:>10}: classes={st.num_classes:<4} exprs={st.num_exprs:<6} "
          f"entropy={st.entropy_bits:.3f} bits  splits={dict(sorted(by_split.items()))}")


def show_one_class(name: str) -> None:
    ds = generate(PRESETS[name])
    sizes = Counter(r.class_id for r in ds.records)
    class_id, n = sizes.most_common(5)[4]
    members = [r.expr for r in ds.records if r.class_id == class_id]
    print(f"\none {name} equivalence class ({n} members, key {class_id}):")
    for text in members[:10]:
        print(f"  {text}")
    if len(members) > 10:
        print(f"  ... and {len(members) - 10} more")


def main() -> None:
    for preset in ("bool5", "simppoly5", "poly5", "simppoly8", "simpbool8"):
        describe(preset)
    show_one_class("bool5")


if __name__ == "__main__":
    main()
