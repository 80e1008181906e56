"""Run preset exp5 and write CSV, summary and SVG charts.

Usage: python scripts/run_exp5.py [--scale 0.1] [--seeds 0,1] [--out results/exp5]
"""
import sys

from pddp.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "--config", "exp5", *sys.argv[1:]]))
