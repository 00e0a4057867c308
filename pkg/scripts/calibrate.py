"""Regenerate calibration/calibration.json from the closed-form scalar vacuum.

    python3 scripts/calibrate.py [--config configs/default.ini]
"""
import argparse
import json
import pathlib

from greenlab import cli

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--out", default=str(ROOT / "calibration" / "calibration.json"))
    args = ap.parse_args()
    doc = cli.calibration_document(cli.load_config(args.config))
    pathlib.Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"plus_sign={doc['plus_sign']} baseline={doc['baseline_exponent']:.2f} "
          f"(n_time={doc['cross_resolution']['n_time']}: {doc['cross_resolution']['baseline_exponent']:.2f}) "
          f"-> {args.out}")


if __name__ == "__main__":
    main()
