"""Regenerate the decimated golden trajectories: python3 tests/golden/make_golden.py"""
from pathlib import Path

import numpy as np

from epsconsensus.cli import bundled_scenario
from epsconsensus.scenario_io import load_scenario
from epsconsensus.simulator import Trajectory, integrate

NAMES = ["example1_naive", "example1_lazy", "example3", "example4", "consensus_start", "ring5_switching"]
EVERY = 100


def decimate(tr: Trajectory) -> Trajectory:
    keep = np.zeros(tr.t.size, dtype=bool)
    keep[::EVERY] = True
    keep[-1] = True
    return Trajectory(tr.t[keep], tr.x[keep], tr.u[keep], tr.V[keep], tr.spread[keep], tr.sigma[keep])


if __name__ == "__main__":
    here = Path(__file__).parent
    for name in NAMES:
        tr = integrate(load_scenario(bundled_scenario(name)).scenario)
        decimate(tr).write_csv(here / f"{name}.csv")
        print(name, tr.t.size)
