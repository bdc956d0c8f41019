#!/usr/bin/env python3
"""Run every canned experiment with its checked-in config.

Writes one CSV per experiment under results/ and prints each summary.
Pass --threads to parallelize repetitions; results are identical either way.
"""

import argparse
import pathlib
import sys

from omniforest.cli import main as cli_main

CONFIGS = [
    "xor_xnor",
    "rxor_sweep",
    "rxor_sample_sweep",
    "spirals",
    "label_shuffle",
    "rotation_sweep",
    "recruitment",
    "scaling",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--only", nargs="*", choices=CONFIGS, default=None)
    args = parser.parse_args()

    root = pathlib.Path(__file__).resolve().parent.parent
    (root / "results").mkdir(exist_ok=True)
    for name in args.only or CONFIGS:
        print(f"=== {name} ===")
        code = cli_main(
            [
                "run",
                "--config",
                str(root / "configs" / f"{name}.toml"),
                "--threads",
                str(args.threads),
            ]
        )
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
