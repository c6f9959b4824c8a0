"""Sweep task difficulty along one axis and dump accuracy curves as CSV.

Two axes: how many formatted examples the learner sees, and how many
unformatted cells surround them.  On the unformatted axis the learner
sees only a truncated window but is scored on the full column, so the
curve measures generalization from the window.

  python3 scripts/convergence_study.py --out-dir plots/
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cfsynth.column import CellType  # noqa: E402
from cfsynth.harness import (  # noqa: E402
    GenSpec,
    convergence_study,
    generate_task,
    write_plot_data,
)

TYPES = (CellType.NUMBER, CellType.TEXT, CellType.DATE)


def collect(n, seed, n_cells, min_unformatted=0):
    tasks = []
    i = 0
    while len(tasks) < n:
        spec = GenSpec(TYPES[i % 3], n_cells=n_cells, rule_depth=2)
        i += 1
        try:
            task = generate_task(seed + i, spec)
        except RuntimeError:
            continue
        unfmt = sum(1 for c in task.column.cells if c.format == 0)
        if unfmt >= min_unformatted:
            tasks.append(task)
    return tasks


def show(rows):
    for row in sorted(rows, key=lambda r: (r.column_type, r.axis_value)):
        print(
            f"  {row.column_type:>6} @ {row.axis_value:>3}: "
            f"{row.mean_execution_match:.3f}  (n={row.n})"
        )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tasks", type=int, default=105)
    ap.add_argument("--seed", type=int, default=9000)
    ap.add_argument("--examples", type=int, default=3, help="reveal size on the unformatted axis")
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tasks = collect(args.tasks, args.seed, n_cells=60)
    rows = convergence_study(tasks, "examples", (1, 2, 3, 5, 8))
    write_plot_data(rows, str(out / "convergence_examples.csv"))
    print("examples axis:")
    show(rows)

    # the 30->100 window sweep needs columns with at least 100 plain cells
    tasks = collect(args.tasks, args.seed, n_cells=140, min_unformatted=100)
    rows = convergence_study(
        tasks, "unformatted", (30, 50, 70, 100), examples=args.examples
    )
    write_plot_data(rows, str(out / "convergence_unformatted.csv"))
    print("unformatted axis:")
    show(rows)


if __name__ == "__main__":
    main()
