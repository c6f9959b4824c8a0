"""Fit ranker weights from synthetic tasks and compare against the defaults.

Harvests (features, gold-match) pairs from candidate pools, fits the
logistic scorer by full-batch gradient descent, writes the model JSON,
and reports held-out benchmark accuracy for both models.

  python3 scripts/train_ranker.py --out ranker.json
"""

import argparse
import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cfsynth.column import CellType  # noqa: E402
from cfsynth.config import EngineConfig  # noqa: E402
from cfsynth.harness import GenSpec, generate_task, run_benchmark  # noqa: E402
from cfsynth.ranking import (  # noqa: E402
    FEATURE_NAMES,
    RankerModel,
    fit_logistic,
    harvest_training_rows,
    model_to_obj,
)

TYPES = (CellType.NUMBER, CellType.TEXT, CellType.DATE)


def collect(n, seed):
    tasks = []
    i = 0
    while len(tasks) < n:
        spec = GenSpec(
            TYPES[i % 3], n_cells=60, rule_depth=2, n_formats=2 if i % 6 == 5 else 1
        )
        i += 1
        try:
            tasks.append(generate_task(seed + i, spec))
        except RuntimeError:
            continue
    return tasks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-tasks", type=int, default=150)
    ap.add_argument("--holdout-tasks", type=int, default=100)
    ap.add_argument("--seed", type=int, default=41000)
    ap.add_argument("--epochs", type=int, default=800)
    ap.add_argument("--lr", type=float, default=0.5)
    ap.add_argument("--out", default="ranker.json")
    args = ap.parse_args()

    train = collect(args.train_tasks, args.seed)
    blocks = [harvest_training_rows(t) for t in train]
    X = np.concatenate([b[0] for b in blocks])
    y = np.concatenate([b[1] for b in blocks])
    print(f"harvested {len(y)} candidates, {y.mean():.1%} gold-matching")

    weights, bias, losses = fit_logistic(X, y, epochs=args.epochs, lr=args.lr)
    print(f"loss {losses[0]:.4f} -> {losses[-1]:.4f} over {args.epochs} epochs")
    model = RankerModel(dict(zip(FEATURE_NAMES, weights.tolist())), float(bias))
    out = pathlib.Path(args.out)
    out.write_text(json.dumps(model_to_obj(model), indent=2) + "\n")
    print(f"wrote {out}")
    for name, w in sorted(model.weights.items(), key=lambda kv: -abs(kv[1])):
        print(f"  {name:>24} {w:+.3f}")

    # held-out suite drawn well past the training seeds
    holdout = collect(args.holdout_tasks, args.seed + 10000)
    base = run_benchmark(holdout, example_counts=(3,)).aggregate()
    tuned = run_benchmark(
        holdout, example_counts=(3,), config=EngineConfig(ranker_model=str(out))
    ).aggregate()
    print(
        f"holdout exec-match @3: default {base['3']['execution_match']:.3f}, "
        f"trained {tuned['3']['execution_match']:.3f}"
    )


if __name__ == "__main__":
    main()
