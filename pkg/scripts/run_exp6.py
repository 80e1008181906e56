"""Run preset exp6 and write CSV, summary and SVG charts.

Usage: python scripts/run_exp6.py [--scale 0.1] [--seeds 0,1] [--out results/exp6]
"""
import sys

from pddp.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "exp6", *sys.argv[1:]]))
