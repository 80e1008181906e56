"""Run preset exp1 and write CSV, summary and SVG charts.

Usage: python scripts/run_exp1.py [--scale 0.1] [--seeds 0,1] [--out results/exp1]
"""
import sys

from pddp.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "exp1", *sys.argv[1:]]))
