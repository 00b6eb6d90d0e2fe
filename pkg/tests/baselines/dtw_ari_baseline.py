"""Record the DTW k=5 ARI baseline on the seeded synthetic corpus.

Run from the repository root:  python tests/baselines/dtw_ari_baseline.py
Writes tests/baselines/dtw_k5_ari.json next to this script.
"""

import json
from pathlib import Path

import numpy as np

from encluster import clustering, extraction, features, synth

K = 5
SEEDS = range(10)
KBAR = 100
MARGIN = 0.02


def main():
    encounters, labels = synth.gen_corpus(40, seed=0)
    unified = [extraction.unify_encounter(e, KBAR) for e in encounters]
    fs = clustering.FeatureSet.from_reps(features.featurize(unified, "DTW"))
    truth = [labels[i] for i in fs.ids]
    runs = [clustering.kmeans(fs, K, seed=s) for s in SEEDS]
    per_seed = {r.seed: clustering.adjusted_rand_index(r.labels, truth) for r in runs}
    best = min(runs, key=lambda r: (r.inertia, r.seed))
    baseline = per_seed[best.seed]
    record = {
        "corpus": {"per_kind": 40, "seed": 0, "kbar": KBAR},
        "k": K,
        "seeds": list(SEEDS),
        "selection": "lowest inertia over seeds",
        "selected_seed": best.seed,
        "per_seed_ari": {str(s): round(v, 6) for s, v in per_seed.items()},
        "baseline_ari": round(baseline, 6),
        "median_ari": round(float(np.median(list(per_seed.values()))), 6),
        "threshold": round(np.floor((baseline - MARGIN) * 100) / 100, 2),
    }
    out = Path(__file__).with_name("dtw_k5_ari.json")
    out.write_text(json.dumps(record, indent=2) + "\n")
    print(json.dumps(record, indent=2))


if __name__ == "__main__":
    main()
