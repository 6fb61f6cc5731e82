"""Smoke test for the mms_lab extension module.

Build and install it first:

    pip install --no-build-isolation -e crates/python
"""

import math

import mms_lab


def main():
    # sigma at K = 0 is linear in t
    assert abs(mms_lab.sigma(0.0, 2.0, 0.3, 1.0) - 0.3) < 1e-15

    # four collinear points: the quadratic cost has a closed form
    line = mms_lab.Space.from_coords([[0.0], [1.0], [2.0], [3.0]], resolution=1.0)
    res = mms_lab.w2(line, [0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5])
    assert abs(res["cost"] - 4.0) < 1e-12, res
    assert abs(sum(m for _, _, m in res["plan"]["entries"]) - 1.0) < 1e-12

    grid = mms_lab.Space.model("euclidean-grid:1d")
    n = len(grid)
    left = grid.reference_measure(grid.ball(0, 0.25))
    right = grid.reference_measure(grid.ball(n - 1, 0.25))
    report = mms_lab.cdstar_check(grid, left, right, k=0.0, n=1.0)
    assert report["verdict"]["status"] == "holds", report["verdict"]

    # a space is at distance zero from itself
    tri = mms_lab.Space([[0, 1, 1], [1, 0, 1], [1, 1, 0]], weights=[0.2, 0.3, 0.5])
    assert mms_lab.pmgh_distance(tri, tri, exhaustive=True)["value"] == 0.0

    k, trace = mms_lab.euclidean_dimension(mms_lab.Space.model("euclidean-grid:2d"), 2.0)
    assert k == 2, trace

    try:
        mms_lab.w2(line, [1.0, 0.0, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("mass mismatch accepted")

    kinds = [kind for kind, _ in mms_lab.list_models()]
    assert "cylinder" in kinds and len(kinds) == 7
    assert math.isfinite(grid.diameter())
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
