"""Write a synthetic trial-level CSV shaped like a pointing / distance-estimation study.

No analysis-ready trial data ships with this repository, so the CLI and the
application-style checks run on this stand-in. Directions are in degrees and
distances in feet; the signed pointing error drifts with target distance and
with the distance-estimation error, and its spread depends on the condition.

    python3 scripts/make_synthetic_trials.py --out data/synthetic_trials.csv
"""

import argparse

import numpy as np
import pandas as pd

CONDITIONS = ("Control", "Preview", "Forward Facing", "Auditory", "Deprivation")
# von Mises concentration of the pointing error per condition
KAPPA = {"Control": 9.0, "Preview": 7.0, "Forward Facing": 6.0, "Auditory": 4.5, "Deprivation": 3.5}


def make_trials(n_trials: int = 679, n_participants: int = 64, seed: int = 2024) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    participant = rng.integers(1, n_participants + 1, n_trials)
    condition = rng.choice(CONDITIONS, n_trials)
    target_distance = rng.uniform(8.0, 40.0, n_trials)
    # proportional under-/over-estimation of distance
    reported_distance = target_distance * np.exp(rng.normal(-0.1, 0.25, n_trials))
    dist_err = reported_distance - target_distance
    true_angle = rng.uniform(-180.0, 180.0, n_trials)
    drift = 0.4 * np.sin(target_distance / 8.0) - 0.03 * dist_err
    offset = np.array([{"Control": 0.0, "Preview": 0.05, "Forward Facing": -0.05,
                        "Auditory": 0.1, "Deprivation": 0.15}[c] for c in condition])
    noise = np.array([rng.vonmises(0.0, KAPPA[c]) for c in condition])
    error = drift + offset + noise
    reported_angle = np.degrees(np.angle(np.exp(1j * (np.radians(true_angle) + error))))
    return pd.DataFrame({
        "participant": participant,
        "condition": condition,
        "true_angle": np.round(true_angle, 3),
        "reported_angle": np.round(reported_angle, 3),
        "target_distance": np.round(target_distance, 3),
        "reported_distance": np.round(reported_distance, 3),
    })


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/synthetic_trials.csv")
    ap.add_argument("--n", type=int, default=679)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    make_trials(args.n, seed=args.seed).to_csv(args.out, index=False)
    print(f"wrote {args.n} trials to {args.out}")


if __name__ == "__main__":
    main()
