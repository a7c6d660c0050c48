"""Smoke test for the davnav_py extension module.

Build the module first:

    cargo build -p davnav-python --features extension-module --release

The script imports an installed ``davnav_py`` if there is one, otherwise it
loads ``libdavnav_py.so`` straight from the cargo target directory.
"""

import importlib.machinery
import importlib.util
import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    try:
        import davnav_py

        return davnav_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libdavnav_py.so", "libdavnav_py.dylib", "davnav_py.dll"):
            path = ROOT / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("davnav_py", str(path))
                spec = importlib.util.spec_from_loader("davnav_py", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                return module
    sys.exit("davnav_py not found; build it with cargo first")


def main():
    dv = load_module()

    m = dv.GridMap.parse("davmap v1\nresolution 0.5\nname corridor\n.........\n")
    assert (m.width, m.height) == (11, 3), (m.width, m.height)
    assert m.geodesic_distance((1, 1), (1, 9)) == 4.0
    assert m.action_distance((1, 1), "east", (1, 9)) == 8
    assert dv.GridMap.parse(m.to_document()).to_document() == m.to_document()

    traj = [(1, 11 - t) for t in range(11)]
    big = dv.GridMap.parse("davmap v1\nresolution 0.5\nname c\n" + "." * 11 + "\n")
    t, cell, g, _ = dv.intercept_oracle(big, (1, 1), "east", traj)
    assert (t, cell, g) == (5, (1, 6), 2.5), (t, cell, g)

    assert dv.spectrogram_shape(16000) == (65, 26, 2)
    assert dv.spectrogram_shape(44100) == (65, 69, 2)
    tone = [math.sin(2 * math.pi * 1000 * n / 16000) for n in range(16000)]
    shape, values = dv.spectrogram(tone, tone, 16000)
    assert shape == (65, 26, 2) and len(values) == 65 * 26 * 2

    assert dv.success_weighted(True, 4.0, 8.0) == 0.5
    assert dv.success_weighted(False, 4.0, 4.0) == 0.0

    suite = dv.Suite.generate('version = 1\nepisodes = 6\nseed = 2\n[maps]\ncount = 2\n[sounds]\ncount = 12\n')
    assert len(suite) == 6
    sim, obs = suite.reset(0)
    assert tuple(obs["shape"]) == (65, 26, 2)
    obs, reward, done, info = sim.step("rotate_left")
    assert not done and obs["step_index"] == 1
    while not sim.done:
        sim.step("stop")
    score = sim.score()
    assert score["success"] is False and sim.outcome == "FailureWrongStop"
    assert suite.score_log(sim.log_jsonl())["dspl"] == 0.0

    table = suite.run("oracle")
    overall = [line for line in table.splitlines() if line.startswith("all")][0]
    assert overall.split()[2] == "1.000", table
    print(table, end="")
    print("smoke test passed")


if __name__ == "__main__":
    main()
