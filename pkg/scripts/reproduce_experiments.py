#!/usr/bin/env python3
"""
Reproduce the splat regression experiments from the shipped configs.

This script:
1. Runs the gradient checks (least squares and PDE losses)
2. Tabulates the Chebyshev/Haar baselines and the approximation trend
3. Samples the Bures-Wasserstein geodesic
4. Optionally (--full) runs the long training configs: fig1, sawtooth,
   2-D regression, Poisson and Allen-Cahn

Every run writes its artifacts under runs/<config name>/ and the script
finishes with a one-line verdict per experiment.
"""

import argparse
import json
import os
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pandas as pd

from splatreg.cli import EXIT_OK, run

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / 'configs'

QUICK = ['gradcheck', 'gradcheck_pde', 'baseline', 'approx_bound', 'geodesic']
FULL = ['fig1', 'fig1_chebyshev', 'sawtooth', 'regression_2d', 'poisson', 'allen_cahn_small']


def summarize(name: str, out_dir: Path) -> str:
    """Short description of a finished run from its manifest and tables."""
    manifest_path = out_dir / 'manifest.json'
    if not manifest_path.exists():
        return 'no manifest'
    manifest = json.loads(manifest_path.read_text())

    if 'final_val_mse' in manifest:
        text = f"val_mse={manifest['final_val_mse']:.3e}"
        baselines = out_dir / 'baselines.csv'
        if baselines.exists():
            table = pd.read_csv(baselines)
            best = table.loc[table['mse'].idxmin()]
            text += f"  best baseline {best['method']} mse={best['mse']:.3e}"
        return text
    if 'final_loss' in manifest:
        initial, final = manifest['initial_loss'], manifest['final_loss']
        return f"loss {initial:.3e} -> {final:.3e} (x{initial / final:.1f})" if final > 0 else f"loss {final:.3e}"
    if 'distance' in manifest:
        return f"W2={manifest['distance']:.10g} oracle={manifest['oracle_distance']:.10g}"
    if 'passed' in manifest:
        return 'PASS' if manifest['passed'] else 'FAIL'
    approx = out_dir / 'approx_bound.csv'
    if approx.exists():
        medians = pd.read_csv(approx).groupby(['eps', 'k'])['sup_error'].median()
        return '  '.join(f"(eps={eps:g}, k={k}) median={err:.3e}" for (eps, k), err in medians.items())
    return 'done'


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument('--full', action='store_true', help='also run the long training configs')
    parser.add_argument('--runs', default=str(ROOT / 'runs'), help='output root')
    args = parser.parse_args()

    names = QUICK + (FULL if args.full else [])
    runs_root = Path(args.runs)

    print("\n" + "=" * 70)
    print("SPLAT REGRESSION: REPRODUCING EXPERIMENTS")
    print("=" * 70)

    results = {}
    for i, name in enumerate(names, start=1):
        print(f"\n[{i}/{len(names)}] {name}")
        out_dir = runs_root / name
        code = run(CONFIGS / f'{name}.cfg', out=str(out_dir), log_level='WARNING')
        results[name] = code
        mark = '✓' if code == EXIT_OK else '✗'
        print(f"  {mark} exit {code}: {summarize(name, out_dir)}")

    print("\n" + "=" * 70)
    failed = [name for name, code in results.items() if code != EXIT_OK]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
    else:
        print(f"All {len(results)} experiments completed")
    print("=" * 70)
    return 1 if failed else 0


if __name__ == '__main__':
    sys.exit(main())
