"""Produce summary and per-class tables from validation/test prediction files.

With no inputs, a synthetic stand-in with 34 classes and 1024-d features is
generated first so the full pipeline can be exercised end to end.

    python3 scripts/report_tables.py --val val.jsonl --test test.jsonl --manifest classes.json
"""

import argparse
from pathlib import Path

import numpy as np

from caring import (
    ClassManifest,
    FitConfig,
    SynthSpec,
    fit_caring,
    fit_temperature,
    gen_grouped,
    partition_classes,
    per_class_report,
    reliability_report,
    subset_filter,
)
from caring import io


def stand_in(out_dir: Path, m: int = 34, d: int = 1024, n: int = 1500) -> tuple[Path, Path]:
    train = gen_grouped(SynthSpec(4 * n, m, [1.5, 4.0], feature_dim=d, seed=0))
    # skewed class frequencies so the common/rare split is meaningful
    weights = np.exp(-np.arange(m) / 8.0)
    counts = np.bincount(train.labels, minlength=m) * weights
    manifest = ClassManifest([f"class_{i:02d}" for i in range(m)], [int(c) for c in counts])
    paths = []
    for name, seed in (("val", 1), ("test", 2)):
        path = out_dir / f"{name}.jsonl"
        io.write_predictions(gen_grouped(SynthSpec(n, m, [1.5, 4.0], feature_dim=d, seed=seed)), path, manifest)
        paths.append(path)
    return paths[0], paths[1]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--val", type=Path)
    parser.add_argument("--test", type=Path)
    parser.add_argument("--manifest", type=Path)
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument("--top", type=int, default=5, help="classes shown from each end of the frequency order")
    parser.add_argument("--out-dir", type=Path, default=Path("runs/tables"))
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    if args.val is None or args.test is None:
        args.val, args.test = stand_in(args.out_dir)
    val, manifest = io.read_predictions(args.val, args.manifest)
    test, _ = io.read_predictions(args.test, args.manifest)
    if manifest is None:
        raise SystemExit("a class manifest is required (sidecar file or --manifest)")

    calibrators = {
        "Raw": None,
        "Temperature Scaling": fit_temperature(val, FitConfig.temperature())[0],
        "CARING": fit_caring(val, FitConfig.caring(epochs=args.epochs))[0],
    }

    def temps(cal, ds):
        return None if cal is None else cal.temperatures(ds)

    common, rare = partition_classes(manifest)
    text = []
    for title, classes in (("Common Classes", common), ("Rare Classes", rare), ("All Classes", range(val.num_classes))):
        v, t = subset_filter(val, classes), subset_filter(test, classes)
        rows = [(name, reliability_report(v, temps(cal, v)), reliability_report(t, temps(cal, t))) for name, cal in calibrators.items()]
        text.append(io.format_summary_table(rows, title))

    order = sorted(range(val.num_classes), key=lambda c: (-manifest.frequencies[c], c))
    shown = order[: args.top] + order[-args.top:]
    columns = [(name, per_class_report(test, temps(cal, test), manifest)) for name, cal in calibrators.items()]
    text.append("\n" + io.format_class_table(columns, shown))

    output = "".join(text)
    print(output)
    (args.out_dir / "tables.txt").write_text(output)
    for name, cal in calibrators.items():
        if cal is not None:
            io.save_calibrator(cal, args.out_dir / f"{name.lower().replace(' ', '_')}.json")


if __name__ == "__main__":
    main()
