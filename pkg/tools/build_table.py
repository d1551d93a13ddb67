"""Regenerate the bundled recommended-iteration table.

    python3 tools/build_table.py [--trials 400]
"""

import argparse
import json
from pathlib import Path

from tpm_reconcile import harness

OUT = Path(__file__).resolve().parents[1] / "src" / "tpm_reconcile" / "data" / "recommended.json"


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=400)
    parser.add_argument("--key-bits", type=int, nargs="+", default=[128, 256])
    args = parser.parse_args()
    rows = []
    for bits in args.key_bits:
        spec = harness.SweepSpec(bits, (2, 3, 4), (1, 2, 3), structures="table", trials=args.trials)
        for result in harness.run_trials(spec):
            d = harness.stats_to_dict(result)
            rows.append({k: d[k] for k in ("config_id", "key_length_bits", "L", "qber_percent", "N", "K",
                                           "trial_count", "success_count", "mean", "std", "recommended")})
            print(d["config_id"], d["recommended"], flush=True)
    OUT.write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
