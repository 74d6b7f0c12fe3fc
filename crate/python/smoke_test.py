"""Smoke test for the realgap Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import tempfile

import realgap


def main():
    sc = realgap.Scenario("N1")
    assert sc.name == "N1" and sc.track_length > 5.0
    assert len(sc.obstacles) == 2

    gap = realgap.GapProfile.preset("paper_calibrated")
    assert not gap.is_zero()
    assert realgap.GapProfile.from_toml(gap.to_toml()).to_toml() == gap.to_toml()

    sil = realgap.run_closed_loop(sc, "SIL", ads="modular_gt", seed=1, max_duration=2.0)
    rw = realgap.run_closed_loop(sc, "RW", ads="modular_gt", seed=1, max_duration=2.0)
    assert sil.outcome == "timeout" and len(sil) == 200
    assert sil.body_bytes() == rw.body_bytes()
    m = realgap.evaluate_run(sil, rw, sc)
    assert m["frechet_to_reference"] == 0.0

    with tempfile.TemporaryDirectory() as d:
        sil.save(d + "/log")
        again = realgap.RunLog.load(d + "/log")
        assert again.body_bytes() == sil.body_bytes()
        written = realgap.run_campaign('id = "rq2_brake"\nmodalities = ["SIL", "RW"]\n', d + "/out")
        assert any(str(p).endswith(".csv") for p in written)

    assert realgap.discrete_frechet([[0, 0], [1, 0]], [[0, 1], [1, 1]]) == 1.0
    u, p = realgap.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert u == 0.0 and abs(p - 0.1) < 1e-12
    assert realgap.iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    data = realgap.encode_tracking(1.0, 2.0, 0.0, 0.5, 3.0, object_id=7)
    assert realgap.decode_tracking(data) == (7, 1.0, 2.0, 0.0, 0.5, 3.0)

    try:
        realgap.Scenario("nowhere")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown scenario accepted")
    print("realgap smoke test passed")


if __name__ == "__main__":
    main()
