"""Project trained expression vectors to 2-D and write them to CSV.

Trains briefly on the additive polynomial dataset, runs PCA over the
train and seen-test vectors via the built-in Jacobi eigensolver, and
writes id,class,pca0,pca1 rows ready for any plotting tool.
"""

import csv

from semvec import evaluation
from semvec.datagen import PRESETS, generate
from semvec.expr import parse
from semvec.training import preset, train

OUT = "embedding_map.csv"


def main() -> None:
    ds = generate(PRESETS["simppoly5"])
    print("training eqnet on simppoly5 ...")
    model, _ = train(ds, preset("eqnet", batch_size=64, epochs=300, seed=0))

    recs = ds.by_split("train", "seen_test")
    exprs = [parse(r.expr, ds.spec.domain) for r in recs]
    pool = evaluation.pool_from_model(model, exprs, [r.class_id for r in recs])
    coords, eigvals = evaluation.pca_project(pool.vectors, dims=2)
    print(f"top eigenvalues: {eigvals[0]:.4f} {eigvals[1]:.4f}")

    with open(OUT, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["id", "class", "pca0", "pca1"])
        for i in range(len(pool.ids)):
            w.writerow([pool.ids[i], pool.classes[i], f"{coords[i, 0]:.6f}", f"{coords[i, 1]:.6f}"])
    print(f"wrote {len(pool.ids)} rows to {OUT}")


if __name__ == "__main__":
    main()
