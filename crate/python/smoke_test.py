"""Smoke test for the Python bindings. Run after `pip install -e crates/py`."""

import json
import math
import tempfile
from pathlib import Path

import bouss


def small_config(**sections):
    doc = {
        "schema_version": 1,
        "seed": 7,
        "mesh": {"nx": 4, "ny": 4},
        "time": {"dt": 0.025, "T": 0.05},
        "control": {"v1": {"kind": "random"}, "v2": {"kind": "random"}},
    }
    doc.update(sections)
    return bouss.Config(json.dumps(doc))


def main():
    cfg = small_config()
    assert cfg.violations() == []
    assert json.loads(cfg.to_json())["schema_version"] == 1

    try:
        bouss.Config(json.dumps({"schema_version": 1, "time": {"dt": -1.0}}))
    except bouss.ConfigError as e:
        assert "dt" in str(e)
    else:
        raise AssertionError("negative dt accepted")

    p = bouss.Problem(cfg)
    assert p.n_steps == 2
    v1, v2 = p.initial_control()
    assert len(v1) == p.n_steps and len(v1[0]) == len(p.gamma1_nodes)
    assert len(v2[0]) == len(p.gamma2_nodes)

    run = p.solve(v1, v2)
    assert len(run["energy"]) == p.n_steps
    for row in run["energy"]:
        assert abs(row["residual_z"]) < 1e-9 and abs(row["residual_w"]) < 1e-9

    j, g1, g2 = p.gradient(v1, v2)
    assert math.isclose(j, p.cost_value(v1, v2), rel_tol=1e-14)
    rel = p.grad_check(v1, v2)
    assert rel < 1e-5, rel

    lo, hi = p.project([[[5.0, -5.0]] * len(v1[0])] * p.n_steps, [[0.0] * len(v2[0])] * p.n_steps)
    assert lo[0][0] == [1.0, 0.1] and hi[0][0] == 0.1

    opt = p.optimize()
    js = [r["J"] for r in opt["history"]]
    assert all(b <= a for a, b in zip(js, js[1:]))
    assert all(r["feasible"] for r in opt["history"])

    forms = bouss.check_forms(small_config(forms={"n_samples": 5}))
    assert forms["passed"], forms

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "c.json"
        path.write_text(cfg.to_json())
        assert bouss.run("solve", str(path), str(Path(tmp) / "out"), 3) == 0
        assert (Path(tmp) / "out" / "trajectory.csv").exists()

    print(f"ok: J = {j:.6f}, gradient discrepancy {rel:.2e}, optimizer {opt['status']} at J = {js[-1]:.6f}")


if __name__ == "__main__":
    main()
