"""Solve each config in configs/ and print the certificate summary."""

import argparse
import sys
from pathlib import Path

from divsolve import cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "runs" / "demo"))
    args = ap.parse_args()
    codes = {}
    for name in ("rotation", "gradient_compatible", "gradient_incompatible"):
        print(f"--- {name}")
        codes[name] = cli.main(["solve", str(ROOT / "configs" / f"{name}.txt"),
                                "--out", str(Path(args.out) / name)])
    print()
    for name, code in codes.items():
        print(f"{name:24s} exit {code}")
    # the incompatible case is expected to exit 3
    return 0 if codes == {"rotation": 0, "gradient_compatible": 0, "gradient_incompatible": 3} else 1


if __name__ == "__main__":
    sys.exit(main())
