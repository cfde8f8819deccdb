#!/usr/bin/env python3
"""Run every frozen preset and write <name>.csv / <name>.json into one directory.

    python scripts/reproduce_figures.py --out-dir figures/
    python scripts/reproduce_figures.py --only fig13-case-a fig13-case-c
"""

import argparse
import json
import sys
import time
from pathlib import Path

from cavity_forge import cli

# report keys worth echoing per command
HEADLINE = {
    "emit": ("p_emit", "p_spont"),
    "shape": ("l2_error", "p_emit", "clipped_samples"),
    "absorb": ("p_reflected", "p_stored", "bookkeeping_error"),
    "sweep-c": ("infeasible",),
    "hom": ("total_cd", "dip_width_ns"),
    "qutrit": (),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="figures", type=Path)
    ap.add_argument("--only", nargs="*", choices=cli.PRESETS, help="subset of presets")
    args = ap.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    worst = 0
    for name in args.only or cli.PRESETS:
        t0 = time.perf_counter()
        code = cli.main(["preset", name, "--out-dir", str(args.out_dir)])
        elapsed = time.perf_counter() - t0
        worst = max(worst, code)
        rep = json.loads((args.out_dir / f"{name}.json").read_text()) if code in (0, 2) else {}
        keys = HEADLINE.get(rep.get("kind"), ())
        summary = ", ".join(f"{k}={rep[k]:.6g}" if isinstance(rep.get(k), float) else f"{k}={rep.get(k)}"
                            for k in keys if k in rep)
        print(f"{name:14s} exit {code}  {elapsed:6.2f}s  {summary}")
    return worst


if __name__ == "__main__":
    sys.exit(main())
