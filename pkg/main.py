"""
Main entry point
Runs an experiment from a JSON config, e.g.

    python main.py verify --config configs/fixed.json --seed 1
"""

from qsmetric.cli import run

if __name__ == "__main__":
    run()
