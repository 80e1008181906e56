"""Run preset exp3 and write CSV, summary and SVG charts.

Usage: python scripts/run_exp3.py [--scale 0.1] [--seeds 0,1] [--out results/exp3]
"""
import sys

from pddp.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "exp3", *sys.argv[1:]]))
