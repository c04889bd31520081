"""Large-dataset runs: hours of CPU, never part of the test suite.

The small benchmark presets reproduce their reference statistics
exactly and train in minutes; the families below do not fit a desk
budget.  Enumerating bool10 builds over ten million trees and wants
several gigabytes of memory, and full-budget training on any of these
takes hours per seed.  This script documents the exact recipe end to
end.  Nothing imports it from tests/; run it manually, under nohup.

    python3 demos/large_scale.py bool10
    python3 demos/large_scale.py simpbool10
    python3 demos/large_scale.py onev-poly13
"""

import sys
import time

from semvec import datagen
from semvec.datagen import PRESETS, generate, write_jsonl
from semvec.training import preset, train

# Enumeration sizes here are far beyond the default guard.
MAX_COUNT = 2_000_000_000

RUNS = {
    # dataset: (epochs, batch_size) at the reference batch sizes
    "bool10": (1000, 900),
    "simpbool10": (1000, 900),
    "simppoly10": (1000, 900),
    "onev-poly13": (1000, 900),
}


def run(name: str) -> None:
    if name not in RUNS:
        raise SystemExit(f"unknown run {name!r}; choose from {sorted(RUNS)}")
    epochs, batch = RUNS[name]
    t0 = time.time()
    print(f"enumerating {name} (this can take hours) ...", flush=True)
    ds = generate(PRESETS[name], max_count=MAX_COUNT)
    st = datagen.stats(ds.records)
    print(f"{name}: classes={st.num_classes} exprs={st.num_exprs} "
          f"entropy={st.entropy_bits:.4f} [{time.time() - t0:.0f}s]", flush=True)
    write_jsonl(ds, f"{name}.jsonl")

    for seed in (0, 1, 2):
        t1 = time.time()
        print(f"training eqnet on {name}, seed {seed} ...", flush=True)
        model, history = train(ds, preset("eqnet", epochs=epochs, batch_size=batch, seed=seed))
        best = max(h.valid_score5 for h in history)
        model.save(f"{name}-eqnet-s{seed}.json", extra={"dataset": name})
        print(f"seed {seed}: best valid score5 {best:.4f} [{time.time() - t1:.0f}s]", flush=True)


if __name__ == "__main__":
    if len(sys.argv) != 2:
        raise SystemExit(__doc__)
    run(sys.argv[1])
