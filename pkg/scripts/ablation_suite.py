"""Run every ablation axis on a shared synthetic corpus.

Writes one CSV per axis (similarity, radius, losses, variant) into
--outdir, all runs sharing the same corpus, folds, and seed ladder so
rows are comparable across tables.

Usage: python3 scripts/ablation_suite.py [--outdir DIR] [--repeats N]
"""

import argparse
from pathlib import Path

from divsum.cli import main as cli_main
from divsum.data import SynthSpec, save_dataset, synth_generate

AXES = ("similarity", "radius", "losses", "variant")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="ablation_results")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--folds", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    corpus = outdir / "corpus"
    if not (corpus / "manifest.json").exists():
        records = synth_generate(SynthSpec(videos=10, frames=32, dim=8,
                                           shots_per_video=6, noise=0.25,
                                           seed=args.seed, budget_ratio=0.2))
        save_dataset(corpus, records, name="ablation")
        print(f"corpus: {corpus}")

    for axis in AXES:
        out = outdir / f"{axis}.csv"
        print(f"== axis {axis} ==")
        rc = cli_main([
            "ablate", "--data", str(corpus), "--axis", axis,
            "--repeats", str(args.repeats), "--folds", str(args.folds),
            "--epochs", str(args.epochs), "--lr", "3e-3",
            "--weight-decay", "0", "--radius", "1",
            "--budget-ratio", "0.2", "--seed", str(args.seed),
            "--out", str(out),
        ])
        if rc != 0:
            raise SystemExit(rc)
    print(f"tables in {outdir}/: " + ", ".join(f"{a}.csv" for a in AXES))


if __name__ == "__main__":
    main()
