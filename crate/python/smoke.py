"""Smoke test for the latdd_py extension.

Build and run from the repository root:

    cargo build -p latdd-py --release --features extension-module
    python3 python/smoke.py

The script looks for the built library under target/release unless
LATDD_PY_LIB points at it.
"""

import importlib.machinery
import importlib.util
import os
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    path = os.environ.get("LATDD_PY_LIB")
    if path is None:
        for name in ("liblatdd_py.so", "liblatdd_py.dylib", "latdd_py.dll"):
            candidate = ROOT / "target" / "release" / name
            if candidate.exists():
                path = str(candidate)
                break
    if path is None:
        sys.exit("extension not built; run: cargo build -p latdd-py --release --features extension-module")
    loader = importlib.machinery.ExtensionFileLoader("latdd_py", path)
    spec = importlib.util.spec_from_loader("latdd_py", loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    ld = load_module()

    free = ld.GaugeField.generate([4, 4, 4, 4], kind="free")
    assert abs(free.plaquette() - 1.0) < 1e-14
    assert free.checksum() == "9f85ae9bc50dc6c92ac37e2a9d264abe6e0c932f9e7f03a57a3ebe9cc034dd17"

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "r.qpl2")
        rnd = ld.GaugeField.generate([4, 4, 4, 4], kind="random", seed=7)
        rnd.write(path)
        assert os.path.getsize(path) == 40 + 256 * 4 * 18 * 8
        assert ld.GaugeField.read(path).checksum() == rnd.checksum()

    psi = ld.SpinorField.random([4, 4, 4, 4], seed=3)
    out = ld.apply_operator(free, psi, mass=0.25, csw=0.0)
    assert len(out) == len(psi) == 256 * 12

    gauge = ld.GaugeField.generate([8, 8, 8, 8], kind="weak", eps=0.1, seed=1)
    source = ld.SpinorField.random([8, 8, 8, 8], seed=2)
    dd = ld.solve(gauge, source)
    plain = ld.solve(gauge, source, precondition=False)
    assert dd.converged and plain.converged
    assert 3 * dd.iterations <= plain.iterations
    two = ld.solve(gauge, source, rank_grid=[1, 1, 1, 2])
    assert two.residual_history == dd.residual_history
    print(f"solve: DD {dd.iterations} vs plain {plain.iterations} iterations, "
          f"true residual {dd.final_true_residual:.2e}")

    uniform = ld.Plan.uniform([64, 64, 64, 128], [8, 4, 4, 4], [4, 4, 8, 8])
    best = ld.Plan.nonuniform([64, 64, 64, 128], [8, 4, 4, 4], [4, 4, 8, 8], axis=3)
    assert best.splits[3] == [28, 28, 28, 28, 16]
    assert (uniform.rank_count, best.rank_count) == (1024, 640)
    assert abs(best.cost_reduction(uniform) - 0.375) < 1e-12
    assert abs(ld.load(64, 60) - 64 / 120) < 1e-12
    assert best.to_dict()["rank_count"] == 640

    s = ld.Schedule("tz", [2, 2, 4, 8])
    assert s.groups == 5 and s.violations() == []
    assert dict(s.windows())["c"] == [1, 2, 3]
    assert ld.Schedule("tz", [2, 2, 4, 8], naive=True).violations()

    assert ld.flops()["flops_per_site"] == 1848
    model = ld.perf_model()
    assert model["working_set_single_kb"] == 456.0
    assert model["working_set_half_kb"] == 312.0

    try:
        ld.GaugeField.generate([1, 4, 4, 4])
    except ValueError as e:
        print(f"rejected extent 1: {e}")
    else:
        raise AssertionError("extent 1 accepted")

    print("smoke OK")


if __name__ == "__main__":
    main()
