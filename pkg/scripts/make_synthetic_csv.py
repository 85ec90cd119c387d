"""Write a synthetic dataset as a raw CSV plus its schema sidecar.

    python3 scripts/make_synthetic_csv.py out/synth --n 1000 --cont 3 --disc 2 --immut 1
"""

import argparse
import json
from pathlib import Path

from scfrl.data import make_synthetic, schema_document, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("stem", help="output path without extension")
    ap.add_argument("--n", type=int, default=250)
    ap.add_argument("--cont", type=int, default=3)
    ap.add_argument("--disc", type=int, default=1)
    ap.add_argument("--immut", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    d = make_synthetic(args.n, args.cont, args.disc, args.immut, args.seed)
    stem = Path(args.stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    write_csv(d, stem.with_suffix(".csv"))
    stem.with_suffix(".schema.json").write_text(json.dumps(schema_document(d), indent=2))
    print(f"{len(d)} rows, {d.n_features} features ({d.n_mutable} mutable), "
          f"{int(d.labels.sum())} target -> {stem.with_suffix('.csv')}")


if __name__ == "__main__":
    main()
