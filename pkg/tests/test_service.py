import pytest
from fastapi.testclient import TestClient

from camo_bench.dataset import serialize_sequence
from camo_bench.harness.fixtures import COTD_COOCCURRENCE, load_demo_fixture
from camo_bench.service.app import app, from_sequence

client = TestClient(app)


def seq_body(name="s", boxes=((10, 10, 20, 40), (11, 10, 20, 40)), absent=None, attrs=("BC",)):
    absent = absent or [False] * len(boxes)
    return {"name": name, "width": 640, "height": 480, "attributes": list(attrs),
            "frames": [{"box": b, "absent": a} for b, a in zip(boxes, absent)]}


def test_health():
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_attribute_listing():
    body = client.get("/attributes").json()
    assert len(body["attributes"]) == 12 and "BC" not in body["cooccurrence_attributes"]


def test_parse_files():
    r = client.post("/sequences/parse", json={
        "name": "x", "groundtruth": "10,20,30,40\n0,0,0,0\n", "absence": "0\n1\n",
        "attributes": "0,0,1,1,0,0,0,1,0,0,0,1\n", "meta": "width=640\nheight=480\ncategory=crab\n"})
    assert r.status_code == 200
    body = r.json()
    assert body["frames"][0]["box"] == [10, 20, 30, 40]
    assert body["frames"][1] == {"box": None, "absent": True}
    assert body["attributes"] == ["DEF", "MB", "POC", "BC"]


def test_parse_error_is_422_with_line():
    r = client.post("/sequences/parse", json={
        "name": "x", "groundtruth": "10,20,30,40\n1,2\n", "attributes": "0,0,0,0,0,0,0,0,0,0,0,1",
        "meta": "width=640\nheight=480\n"})
    assert r.status_code == 422 and r.json()["detail"].startswith("line 2:")


def test_validate_rule3():
    r = client.post("/sequences/validate", json=seq_body(boxes=(None, (0, 0, 5, 5)), absent=[True, False]))
    assert r.status_code == 200
    assert r.json()["violations"][0]["rule"] == "3"
    assert r.json()["not_evaluated"] == ["1", "4"]


def test_present_frame_without_box_rejected():
    r = client.post("/sequences/validate", json=seq_body(boxes=((0, 0, 5, 5), None)))
    assert r.status_code == 422


def test_unknown_attribute_rejected():
    assert client.post("/sequences/validate", json=seq_body(attrs=("XX",))).status_code == 422


def test_audit():
    body = client.post("/sequences/attributes", json=seq_body()).json()
    assert body["derived"] == {"FM": False, "LR": True, "ARC": False}
    assert body["declared"]["LR"] is False
    assert body["per_frame"]["LR"] == [True, True]


def test_cooccurrence():
    r = client.post("/cooccurrence", json={"sequences": [["DEF", "MB", "BC"], ["MB", "BC"]]})
    counts = r.json()["counts"]
    assert counts[3][3] == 2 and counts[2][3] == 1


def test_cotd_table():
    assert client.get("/fixtures/cotd/cooccurrence").json()["counts"] == [list(r) for r in COTD_COOCCURRENCE]


def _demo_request(trackers=("oracle", "offset_25_0"), **extra):
    ds, results = load_demo_fixture()
    return {
        "dataset": {"name": "demo", "sequences": [from_sequence(s).model_dump() for s in ds]},
        "results": [{"tracker": t, "predictions": {k: v.tolist() for k, v in results[t].predictions.items()}}
                    for t in trackers],
        **extra,
    }


def test_evaluate():
    r = client.post("/evaluate", json=_demo_request(rank_by="prc"))
    assert r.status_code == 200
    body = r.json()
    assert [row["tracker"] for row in body["ranking"]] == ["oracle", "offset_25_0"]
    oracle = body["reports"][0]["overall"]
    assert oracle["prc"] == 1.0 and oracle["auc"] == 20 / 21
    assert body["ranking"][1]["prc"] == 0.0


def test_evaluate_missing_sequence_404():
    req = _demo_request(trackers=("oracle",))
    del req["results"][0]["predictions"]["seq-005"]
    r = client.post("/evaluate", json=req)
    assert r.status_code == 404 and "seq-005" in r.json()["detail"]


def test_evaluate_bad_aggregation():
    assert client.post("/evaluate", json=_demo_request(aggregation="median")).status_code == 422


def test_encoder_check_small():
    r = client.post("/encoder/check", json={"n_blocks": 6, "embed_dim": 8, "n_search_tokens": 8, "prune_at": [2, 4],
                                              "gradients": False})
    assert r.status_code == 200
    body = r.json()
    assert body["passed"] and len(body["gamma_sweep"]) == 10


def test_encoder_check_bad_gamma():
    r = client.post("/encoder/check", json={"gamma": 1.5})
    assert r.status_code == 422 and "gamma" in r.json()["detail"]


def test_sequence_model_roundtrip():
    ds, _ = load_demo_fixture()
    seq = ds.sequences[0]
    body = from_sequence(seq).model_dump()
    r = client.post("/sequences/parse", json={"name": seq.name, "absence": serialize_sequence(seq)["absence.label"],
                                              "groundtruth": serialize_sequence(seq)["groundtruth.txt"],
                                              "attributes": serialize_sequence(seq)["attributes.txt"],
                                              "meta": serialize_sequence(seq)["meta.ini"]})
    assert r.json() == {**body, "frames": [{"box": list(f["box"]) if f["box"] else None, "absent": f["absent"]}
                                           for f in body["frames"]]}
