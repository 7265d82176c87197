"""Smoke test for the mse_py extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml && pip install target/wheels/mse_py-*.whl
"""

import mse_py

t = mse_py.TrsTable.dataset("als_deployed")
assert t.counts == [10, 2, 12, 4, 5, 2, 5] and t.x0 == 40

llm = mse_py.estimate(t, "llm")
assert round(llm["n_hat"]) == 45, llm

sc = mse_py.estimate(mse_py.TrsTable.dataset("wtc"), "sc")
assert round(sc["n_hat"]) == 11977, sc

fit = mse_py.fit_thbm(mse_py.TrsTable.dataset("als_nondeployed"), k=100, max_iter=30, seed=1)
assert fit["n_hat"] >= 67 and len(fit["trace"]) > 0

point, report = mse_py.bootstrap(t, "sc", b=50, seed=7)
assert report["B"] == 50 and point["ci_lower"] <= point["n_hat"] <= point["ci_upper"]

sims = mse_py.simulate("p1", n=300, reps=3, seed=2)
assert len(sims) == 3 and all(tab.x0 + x000 == 300 for tab, x000 in sims)

bench = mse_py.benchmark("p2", n=200, reps=3, methods="truth,llm", b=10, seed=1)
assert bench["rows"][0]["RMAE"] == 0.0

lo, hi = mse_py.chao_ci(50.0, 40, 5.0)
assert lo < 50.0 < hi
assert abs(mse_py.aacir(1, 1, 100_000) - 1.0) < 1e-12

try:
    mse_py.TrsTable([1, 2, 3, 4, 5, 6, -1])
except ValueError:
    pass
else:
    raise AssertionError("negative count accepted")

print("smoke test ok")
