"""Smoke test for the pydetal extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pydetal-*.whl
"""

import json
import math

import pydetal


def record(image_id, p_max):
    return json.dumps({
        "image_id": image_id,
        "width": 100,
        "height": 100,
        "proposals": [[10, 10, 50, 50]],
        "reference": [{"box": [12, 10, 50, 52], "probs": [p_max, 1 - p_max], "proposal_index": 0}],
        "noisy": [
            {"level": 1, "sigma": 8.0, "detections": [{"box": [12, 10, 50, 52], "probs": [0.5, 0.5]}]},
            {"level": 2, "sigma": 16.0, "detections": []},
        ],
        "ground_truth": [{"box": [12, 10, 50, 50], "class": 0}],
    })


def main():
    a = pydetal.BBox(0, 0, 10, 10)
    b = pydetal.BBox(5, 0, 15, 10)
    assert math.isclose(pydetal.iou(a, b), 1 / 3, abs_tol=1e-12)
    assert pydetal.iou(a, pydetal.BBox(10, 0, 20, 10)) == 0.0
    try:
        pydetal.BBox(5, 5, 5, 9)
    except ValueError:
        pass
    else:
        raise AssertionError("degenerate box accepted")

    records = [pydetal.ImageRecord.parse(record(i, p)) for i, p in [("a", 0.9), ("b", 0.6), ("c", 0.75)]]
    r = records[1]
    assert r.image_id == "b" and r.num_detections == 1 and r.num_noise_levels == 2
    assert math.isclose(pydetal.u_image(r), 0.4, abs_tol=1e-12)
    assert math.isclose(pydetal.s_box(r, 0), 0.5, abs_tol=1e-12)
    assert math.isclose(pydetal.s_image(r), 0.5, abs_tol=1e-12)
    assert pydetal.t_image(r) is not None and pydetal.t_image(r, ground_truth=True) is not None
    assert pydetal.ImageRecord.parse(r.to_json()).to_json() == r.to_json()

    scores = pydetal.score(records, "c")
    assert pydetal.rank(scores) == ["b", "c", "a"]
    assert pydetal.rank([("x", None), ("y", 0.1)], undefined="first") == ["x", "y"]
    assert len(pydetal.score(records, "ls_c", lambda_=0.5)) == 3

    state = pydetal.CampaignState(["a", "b", "c"], initial=["a"])
    picked = state.select_round([s for s in scores if s[0] != "a"], 1)
    assert picked == ["b"] and state.labeled == ["a", "b"] and state.unlabeled == ["c"]
    assert state.history == [(1, ["b"])]
    assert pydetal.overlap_ratio(["a", "b"], ["b", "c"]) == 50.0

    hits = [(0.9, True), (0.8, False), (0.7, True), (0.6, True)]
    assert math.isclose(pydetal.average_precision(hits, 3, "prefix"), 29 / 36, abs_tol=1e-12)
    assert math.isclose(pydetal.average_precision(hits, 3), 5 / 6, abs_tol=1e-12)

    passive = [(100, 0.3), (200, 0.4), (400, 0.5)]
    report = pydetal.relative_saving(passive, passive)
    assert all(s == 0.0 for _, _, s in report["points"]) and not report["flagged"]

    curves = pydetal.simulate_campaigns(["r", "c"], 10, 5, 2, [1], num_images=40, num_classes=3,
                                        hard_classes=1, world_seed=3, num_test_images=20)
    assert set(curves) == {"R", "C"} and [n for n, _ in curves["C"]] == [10, 15, 20]
    assert "LS+C" in pydetal.METHODS
    print("pydetal smoke test passed")


if __name__ == "__main__":
    main()
