"""Desk-scale selector benchmark tables (R1 and R2) via the CLI presets.

    python3 scripts/reproduce_tables.py --out out/tables
    python3 scripts/reproduce_tables.py --preset table1-desk --n 100 --kappa 3

Each preset writes ``table1.csv`` / ``table2.csv`` (mean and variance of the
surface-evaluated risk per selector, plus the oracle row) and ``ratios.csv``.
At the default N1=50, N2=200 a full table takes roughly 10-15 minutes on one core.
"""

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from circmix import sim
from circmix.cli import main as cli_main


@dataclass
class TablesConfig:
    presets: list = field(default_factory=lambda: sorted(sim.PRESETS))
    out: str = "out/tables"
    seed: int = 2024
    threads: int = 1
    kappa: list | None = None
    n: list | None = None


def run(cfg: TablesConfig) -> int:
    for name in cfg.presets:
        argv = ["simulate", "--preset", name, "--seed", str(cfg.seed), "--threads", str(cfg.threads),
                "--out", str(Path(cfg.out) / name)]
        if cfg.kappa:
            argv += ["--kappa", *map(str, cfg.kappa)]
        if cfg.n:
            argv += ["--n", *map(str, cfg.n)]
        status = cli_main(argv)
        if status:
            return status
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", action="append", choices=sorted(sim.PRESETS))
    ap.add_argument("--out", default=TablesConfig.out)
    ap.add_argument("--seed", type=int, default=TablesConfig.seed)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--kappa", type=float, nargs="+")
    ap.add_argument("--n", type=int, nargs="+")
    a = ap.parse_args()
    sys.exit(run(TablesConfig(a.preset or sorted(sim.PRESETS), a.out, a.seed, a.threads, a.kappa, a.n)))
