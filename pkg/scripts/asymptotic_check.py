"""Compare the leading-order bias approximation with Monte Carlo bias.

    python3 scripts/asymptotic_check.py --reps 2000

Prints the approximation (with both cross-level weightings), the Monte Carlo
bias with its standard error, and the log-log slope of |bias| against h at
lambda = 0 on two h ladders. Large h leaves the regime where the bias is
quadratic; small h leaves a bias that Monte Carlo noise swamps.
"""

import argparse
import json
from dataclasses import asdict, dataclass

from circmix import sim
from circmix.kernels import Bandwidths


@dataclass
class AsymptoticConfig:
    regression: str = "R2"
    kappa: float = 3.0
    n: int = 500
    x: float = 0.5
    level: int = 0
    h: float = 0.1
    lam: float = 0.05
    reps: int = 2000
    slope_reps: int = 500
    seed: int = 2024


LADDERS = {"wide": (0.05, 0.1, 0.2, 0.4), "small": (0.03, 0.05, 0.08, 0.12)}


def main(cfg: AsymptoticConfig) -> dict:
    spec = sim.DgpSpec(cfg.regression, cfg.kappa, cfg.n)
    H = Bandwidths((cfg.h,), (cfg.lam,))
    mc = sim.mc_bias(spec, cfg.x, cfg.level, H, cfg.reps, cfg.seed)
    out = {"config": asdict(cfg), "mc_bias": mc.bias, "mc_se": mc.se, "mc_variance": mc.variance}
    for w in ("lambda", "aitchison-aitken"):
        t = sim.theorem1_approx(spec, cfg.x, cfg.level, H, categorical_weight=w)
        out[f"approx_{w}"] = {"bias": t.bias, "variance": t.variance, "z": (t.bias - mc.bias) / mc.se}
    for name, hs in LADDERS.items():
        slope, biases = sim.bias_slope(spec, cfg.x, cfg.level, hs, cfg.slope_reps, cfg.seed)
        out[f"slope_{name}"] = {"hs": list(hs), "slope": slope, "abs_bias": biases.tolist()}
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f, default in asdict(AsymptoticConfig()).items():
        ap.add_argument(f"--{f.replace('_', '-')}", dest=f, type=type(default), default=default)
    print(json.dumps(main(AsymptoticConfig(**vars(ap.parse_args()))), indent=2))
