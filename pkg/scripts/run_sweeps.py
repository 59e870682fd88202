"""Regenerate the gamma and m ablation curves as CSV (plot with any external tool).

    python scripts/run_sweeps.py [gamma] [m]
"""

import sys
from pathlib import Path

from bregman_metric.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = {"gamma": ROOT / "configs" / "sweep_gamma.json", "m": ROOT / "configs" / "sweep_m.json"}


def main(axes):
    for axis in axes or sorted(CONFIGS):
        code = cli_main(["sweep", "--config", str(CONFIGS[axis])])
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main(sys.argv[1:])
