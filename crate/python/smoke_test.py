"""Smoke test for the `forlion` Python extension.

Build first, either with `maturin develop -m crates/python/Cargo.toml` or with
`cargo build --release -p forlion-py`; in the latter case this script loads
target/release/libforlion.so directly.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys


def load():
    try:
        import forlion

        return forlion
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libforlion.so", "libforlion.dylib", "forlion.dll"):
            lib = root / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("forlion", str(lib))
                spec = importlib.util.spec_from_loader("forlion", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                return module
    sys.exit("forlion extension not found; run `cargo build --release -p forlion-py`")


def main():
    fl = load()
    print("forlion", fl.__version__)

    # logistic regression in one factor: the optimum is two symmetric points
    space = fl.DesignSpace([{"name": "x", "lower": -3.0, "upper": 3.0}])
    model = fl.Model.glm(space, "logit", "1 + x")
    local = fl.InfoProvider.local(model, [0.0, 1.0])
    res = fl.optimize(space, local, {"reltol": 1e-5, "delta": 0.1}, glm_adapted=True)
    design = res["design"]
    assert res["convergence"], res
    optimum = fl.Design([[-1.5434], [1.5434]], [0.5, 0.5])
    assert fl.efficiency(local, design, optimum) > 0.9999, design
    assert all(abs(abs(p[0]) - 1.5434) < 1e-2 for p in design.points), design
    print("logistic design:", design)

    uniform = fl.Design([[-3.0], [0.0], [3.0]], [1 / 3, 1 / 3, 1 / 3])
    eff = fl.efficiency(local, uniform, design)
    assert 0.0 < eff < 1.0, eff
    assert abs(fl.efficiency(local, design, design) - 1.0) < 1e-12
    print(f"uniform 3-point design efficiency: {eff:.4f}")

    exact = fl.round(local, space, design, 0.1, [0.01], 10)
    assert sum(exact["counts"]) == 10, exact
    print("exact design:", exact["points"], exact["counts"])

    # three-category continuation-ratio model
    hf_space = fl.DesignSpace([{"name": "x1", "lower": 0.0, "upper": 200.0}])
    hf = fl.Model.mlm(hf_space, "continuation", 3, ["1 + x1 + x1^2", "1 + x1", "0"])
    assert hf.p == 5
    theta = [-1.935, -0.02642, 0.0003174, -9.159, 0.06386]
    f = hf.fisher_info(theta, [100.0])
    assert all(math.isclose(f[i][j], f[j][i]) for i in range(5) for j in range(5))

    # sample-based EW design with two parameter vectors
    ew = fl.InfoProvider.sample(model, [[0.0, 1.0], [0.5, 1.5]])
    res = fl.optimize(space, ew, {"reltol": 1e-5, "delta": 0.1}, glm_adapted=True)
    assert res["convergence"], res
    print("sample EW design:", res["design"])

    try:
        fl.Model.glm(space, "logit", "1 + y")
    except ValueError as e:
        print("bad formula rejected:", e)
    else:
        raise AssertionError("unknown factor accepted")

    print("ok")


if __name__ == "__main__":
    main()
