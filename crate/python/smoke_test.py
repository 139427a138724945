"""Smoke test for the pyqfi3d extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import math
import os
import tempfile

import pyqfi3d

PI2 = math.pi ** 2


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    ev = pyqfi3d.Evaluator()

    geo = ev.qfi([0.4, -0.2, 1.1], 0.75, "geometric")
    assert close(geo[0][0], 4 * PI2, 1e-7) and close(geo[2][2], PI2 / 3, 1e-7), geo

    rec = ev.point([1.0, 1.0, 0.0], 0.0, "centroid")
    assert rec["status"] == "ok"
    assert close(rec["qcrb_x"], 1 / PI2, 1e-8) and close(rec["qcrb_z"], 12 / PI2, 1e-8), rec

    l, dp2 = [0.3, 0.2, 1.0], 0.95
    closed = ev.qfi(l, dp2)
    path = ev.coefficient_path(l, dp2)
    oracle = pyqfi3d.oracle_qfi(l, dp2, "centroid", 128)
    scale = max(abs(x) for row in closed for x in row)
    for other in (path, oracle):
        dev = max(abs(a - b) for ra, rb in zip(closed, other) for a, b in zip(ra, rb))
        assert dev / scale < 1e-6, dev

    qx, qy, qz = pyqfi3d.qcrb(closed)
    assert qx > 0 and qy > 0 and qz > 0

    delta, phi, d_delta, d_phi = pyqfi3d.overlap([0.0, 0.0, 0.0])
    assert close(delta, 1.0, 1e-12) and close(d_phi[2], math.pi / 2, 1e-10)

    assert close(pyqfi3d.brightness_ratio(0.75), 13.928203230275509, 1e-9)
    assert ev.point([1.0, 1.0, 0.0], 0.9999)["status"] == "singular"

    try:
        pyqfi3d.Evaluator().qfi([0.0, 0.0, 0.0], 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("dp2 outside [0, 1) accepted")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "sweep.cfg")
        out = os.path.join(tmp, "out.csv")
        with open(cfg, "w") as f:
            f.write("dp2 = 0, 0.75\nlz = 0, 1\ngrid = 0.5:0.5:1.5\n")
        n = pyqfi3d.sweep(out, cfg)
        with open(out) as f:
            lines = f.read().splitlines()
        assert n == 36 and len(lines) == 37 and lines[0] == pyqfi3d.CSV_HEADER

    passed, report = pyqfi3d.verify("symmetry")
    assert passed, report

    print("smoke test passed")


if __name__ == "__main__":
    main()
