"""Compare all encoder families on one dataset.

Trains eqnet, both plain tree networks, and the GRU sequence encoder on
the additive polynomial dataset, fits the tf-idf token baseline, and
prints unseen-split score5 for each.  A few minutes of CPU; the neural
budgets are deliberately small, so treat the numbers as directional.
"""

import numpy as np

from semvec import evaluation
from semvec.datagen import PRESETS, generate
from semvec.expr import parse
from semvec.models import TfIdf
from semvec.training import preset, train

EPOCHS = 300


def unseen_score5(encode_many, ds) -> float:
    recs = [r for r in ds.records if r.split in ("train", "unseen_test")]
    exprs = [parse(r.expr, ds.spec.domain) for r in recs]
    pool = evaluation.EmbeddingPool(
        [r.expr for r in recs], [r.class_id for r in recs], encode_many(exprs)
    )
    queries = [i for i, r in enumerate(recs) if r.split == "unseen_test"]
    return dict(evaluation.score_curve(pool, queries=queries))[5]


def main() -> None:
    ds = generate(PRESETS["simppoly5"])
    scores: dict[str, float] = {}

    for kind in ("eqnet", "treenn1", "treenn2", "gru"):
        overrides = {"epochs": EPOCHS, "seed": 0}
        if kind == "eqnet":
            overrides["batch_size"] = 64
        print(f"training {kind} ...")
        model, _ = train(ds, preset(kind, **overrides))
        scores[kind] = unseen_score5(model.encode_many, ds)

    train_exprs = [parse(r.expr, ds.spec.domain) for r in ds.by_split("train")]
    tfidf = TfIdf(ds.spec.domain, ds.spec.variables).fit(train_exprs)
    scores["tfidf"] = unseen_score5(tfidf.encode_many, ds)

    rng = np.random.default_rng(0)
    recs = [r for r in ds.records if r.split in ("train", "unseen_test")]
    fake = evaluation.EmbeddingPool(
        [r.expr for r in recs], [r.class_id for r in recs],
        rng.standard_normal((len(recs), 8)),
    )
    queries = [i for i, r in enumerate(recs) if r.split == "unseen_test"]
    scores["random"] = dict(evaluation.score_curve(fake, queries=queries))[5]

    print("\nunseen-split score5 on simppoly5:")
    for name, s in sorted(scores.items(), key=lambda kv: -kv[1]):
        print(f"  {name:>8}: {s:.4f}")


if __name__ == "__main__":
    main()
