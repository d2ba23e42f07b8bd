"""Builds the extension with cargo and exercises it from Python.

    python3 python/smoke_test.py

Uses an already installed `pycrmdp` (e.g. from `maturin develop`) if there
is one.
"""

import importlib
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("pycrmdp")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "spiky-crmdp-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libpycrmdp.so"
    dest = Path(tempfile.mkdtemp()) / "pycrmdp.so"
    shutil.copy(built, dest)
    sys.path.insert(0, str(dest.parent))
    return importlib.import_module("pycrmdp")


def main():
    m = load()

    corners = m.GridEnv.builtin("corners")
    assert (corners.width, corners.height, corners.horizon) == (5, 5, 8)
    assert corners.goal == (0, 0) and corners.start == (4, 4)
    assert corners.observed_reward((0, 4)) == 11 and corners.true_reward((0, 4)) == 6
    assert corners.transition((0, 0), "up") == (0, 0)
    assert m.GridEnv.parse(corners.map_text()).corrupt_cells == corners.corrupt_cells

    for lv in ("nlv", "tlv"):
        assert sorted(m.detect(corners, lv)) == [(0, 4), (4, 0)]
        ontheway = m.GridEnv.builtin("ontheway")
        assert sorted(m.detect(ontheway, lv)) == [(0, 4), (1, 2), (2, 1), (4, 0)]

    report = m.check(corners, samples=100)
    assert report["spiky"] and report["smooth"] and not report["trajectory_violated"]

    b = m.bounds(corners)
    assert b["lower"][(0, 4)] == 6 and b["upper"][(0, 4)] == 7
    assert b["regret_bound"] >= 0

    assert m.plan(corners, "true")["true_return"] == 64
    hacked = m.plan(corners, "observed")
    assert (hacked["observed_return"], hacked["true_return"]) == (73, 48)
    assert m.plan(corners, "lower")["true_return"] == 64

    run = m.learn_online(corners, agent="crmdp", reward="observed", episodes=4000, seed=1)
    assert len(run["true_return"]) == 4000
    assert run["true_return"][-1] == 64
    assert sorted(run["identified_corrupt"]) == [(0, 4), (4, 0)]

    try:
        m.GridEnv.builtin("nowhere")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("smoke test ok")


if __name__ == "__main__":
    main()
