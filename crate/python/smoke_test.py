"""Smoke test for the ekbl_py extension module.

Install first:  pip install --no-build-isolation -e crates/py
Run:            python python/smoke_test.py
"""

import cmath
import json
import math
import tempfile
from pathlib import Path

import ekbl_py


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    if not ok:
        raise SystemExit(1)


def main():
    # roots: three roots with positive real part solving the sextic
    lam = ekbl_py.char_roots(0.3, -0.4)
    check("roots count", len(lam) == 3)
    check("roots right half-plane", all(l.real > 0 for l in lam))
    res = max(ekbl_py.root_residual(l, 0.25) for l in lam)
    check("roots residual", res < 1e-12, f"{res:.2e}")
    # at xi = 0 the roots are 0 (excluded) and (1 ± i)/sqrt 2
    lam0 = ekbl_py.char_roots(0.0, 0.0)
    check("roots at zero", any(abs(l - cmath.exp(0.25j * math.pi)) < 1e-12 for l in lam0))

    # Ekman profile and its decay rate
    z = [0.5 * k for k in range(1, 40)]
    prof = ekbl_py.ekman_profile((0.01, 0.0), z)
    rate = -(math.log(math.hypot(*prof[-1])) - math.log(math.hypot(*prof[0]))) / (z[-1] - z[0])
    check("ekman decay rate", abs(rate - 1 / math.sqrt(2)) < 1e-12, f"{rate:.12f}")

    fit = ekbl_py.fit_decay([(x, (1 + x) ** -1.5) for x in z], (1.0, 20.0))
    check("power fit", abs(fit["exponent"] + 1.5) < 1e-12, f"{fit['exponent']:.12f}")

    i1, _, _ = ekbl_py.integral_values(0.0)
    check("first integral at zero", abs(i1 - 3.0) < 1e-10, f"{i1:.12f}")

    # scenario parsing with defaults and structured errors
    s = ekbl_py.parse_scenario('{"version": 1, "kind": "ekman_flat"}')
    check("defaults", s["grid"]["n_modes"] == 64 and s["grid"]["Z_max"] == 50.0)
    try:
        ekbl_py.parse_scenario('{"version": 1, "kind": "ekman_flat", "bogus": 1}')
        check("unknown key rejected", False)
    except ekbl_py.SolverError as e:
        check("unknown key rejected", e.args[0] == "CONFIG", e.args[1][:60])
    check("schema", "properties" in ekbl_py.schema())

    # full run through the library, then a byte-exact dump copy
    with tempfile.TemporaryDirectory() as d:
        out = Path(d) / "ekman"
        text = json.dumps({"version": 1, "kind": "ekman_flat",
                           "grid": {"n_modes": 8, "n_z": 64},
                           "output": {"fields": "both", "z_stride": 1}})
        rep = ekbl_py.run_scenario(text, str(out))
        err = rep["results"]["max_abs_error"]
        check("ekman run", err <= 1e-8, f"{err:.2e}")
        dump = ekbl_py.read_ekbl(str(out / "fields.ekbl"))
        check("dump shape", dump["n"] == 8 and len(dump["v1"]) == 64 * len(dump["z"]))
        ekbl_py.copy_ekbl(str(out / "fields.ekbl"), str(Path(d) / "copy.ekbl"))
        same = (out / "fields.ekbl").read_bytes() == (Path(d) / "copy.ekbl").read_bytes()
        check("dump copy bit-exact", same)
        header = (out / "fields.csv").read_text().splitlines()[0]
        check("csv columns", header.split(",") == ["y1", "y2", "z", "v1", "v2", "v3", "p"])
    print("smoke test passed")


if __name__ == "__main__":
    main()
