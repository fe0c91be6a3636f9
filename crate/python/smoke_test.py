"""Smoke test for the `delta` Python extension.

Build and install it first, e.g. from crates/python:

    maturin develop --release

then run `python python/smoke_test.py`.
"""

import json
import sys
import tempfile
from pathlib import Path

import delta


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        spec = json.loads(delta.default_spec())
        offset = spec["clock_offset_ns"]

        dirs = []
        for seed in (1, 2):
            out = tmp / f"run{seed}"
            sender, receiver, truth = delta.simulate(str(out), 1000, seed=seed)
            assert Path(sender).exists() and Path(receiver).exists()
            dirs.append(out)
        truth = json.loads(Path(truth).read_text())

        runs = [
            delta.Run.load(str(d), align="explicit-offset", offset_ns=float(offset))
            for d in dirs
        ]
        a, b = runs
        assert a.offset_ns == offset
        assert len(a.e2e_ns) == 1000

        graph, dot = delta.cfg([a], scope="cross-host")
        graph = json.loads(graph)
        assert graph["edges"] == truth["edges"], "graph differs from ground truth"
        assert dot.startswith("digraph")

        crit = json.loads(delta.criticality(a, scope="cross-host"))
        top = crit["rows"][0]["segment"]
        assert top == {"from": "DecodingStart", "to": "DecodingEnd"}, top

        pred = json.loads(delta.predictability(runs))
        assert pred["n_tests"] > 0

        diff = json.loads(delta.diff(runs, runs))
        assert diff["changed_segments"] == []

        slow = json.loads(delta.slowdown(a, a))
        assert all(abs(r["s_norm"] - 1.0) < 1e-9 for r in slow["rows"])

        energy = json.loads(delta.energy(runs))
        assert len(energy["rows"]) == 2

        assert delta.et2(2.0 / 1000, 1e-3) == 2e-9
        ad = json.loads(delta.ad_ksample([[1.0, 2.0, 3.0, 4.0, 5.0], [6.0, 7.0, 8.0, 9.0, 10.0]]))
        assert ad["verdict"] in ("similar", "different")

        code, out, _ = delta.run_cli(["energy", str(dirs[0]), "--format", "csv"])
        assert code == 0 and out.startswith("x,y\n")
        code, _, err = delta.run_cli(["energy", str(dirs[0]), "--alpha", "2"])
        assert code == 2

        try:
            delta.Run.load(str(tmp / "missing"))
        except ValueError as e:
            assert "NotARunDirectory" in str(e)
        else:
            raise AssertionError("loading a missing run should fail")

    print(f"delta {delta.__version__}: smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
