"""Train an expression encoder and retrieve equivalent expressions.

Trains the residual tree network on boolean expressions up to size
five at a small budget, then queries the embedding pool with a few
held-out expressions and prints their nearest neighbors.  About a
minute of CPU.
"""

from semvec import evaluation
from semvec.datagen import PRESETS, generate
from semvec.expr import parse, print_infix
from semvec.training import preset, train

EPOCHS = 300


def main() -> None:
    ds = generate(PRESETS["bool5"])
    cfg = preset("eqnet", batch_size=64, epochs=EPOCHS, seed=0)
    print(f"training eqnet on bool5 for {EPOCHS} epochs ...")
    model, history = train(ds, cfg)
    print(f"best validation score5: {max(h.valid_score5 for h in history):.4f}")

    recs = [r for r in ds.records if r.split in ("train", "unseen_test")]
    exprs = [parse(r.expr, ds.spec.domain) for r in recs]
    pool = evaluation.pool_from_model(model, exprs, [r.class_id for r in recs])

    queries = [i for i, r in enumerate(recs) if r.split == "unseen_test"][:3]
    for q in queries:
        print(f"\nquery: {pool.ids[q]}   class {recs[q].class_id}")
        for i in evaluation.knn_neighbors(pool, q, k=5):
            tag = "same " if pool.classes[i] == pool.classes[q] else "other"
            print(f"  [{tag}] {pool.ids[i]}")

    curve = evaluation.score_curve(pool, queries=[i for i, r in enumerate(recs) if r.split == "unseen_test"])
    print("\nmean score_k on the unseen split:")
    for k, s in curve[:5]:
        print(f"  k={k:<2} {s:.4f}")
    print(f"curve AUC: {evaluation.auc(curve):.4f}")


if __name__ == "__main__":
    main()
