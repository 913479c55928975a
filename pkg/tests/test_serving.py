import http.client
import json
import threading

import numpy as np
import pytest

from seqmatch.matching import score_all, top_n
from seqmatch.model import OOV
from seqmatch.serving import Recommender, RequestError, make_server, parse_request
from toy import request_for, small_checkpoint, small_dataset


@pytest.fixture(scope="module")
def recommender():
    return Recommender(small_checkpoint())


@pytest.fixture(scope="module")
def server(recommender):
    srv = make_server(recommender, port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv.server_address[1]
    srv.shutdown()
    srv.server_close()


def call(port, method, path, body=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=10)
    data = body if isinstance(body, (bytes, type(None))) else json.dumps(body).encode()
    conn.request(method, path, body=data, headers={"Content-Type": "application/json"})
    resp = conn.getresponse()
    payload = json.loads(resp.read())
    conn.close()
    return resp.status, payload


def test_parse_request():
    user, profile, events, n = parse_request({"user_id": "u1", "events": [{"item_id": "a", "ts": 5}], "n": 3})
    assert user == "u1" and profile == {"user_id": "u1"} and n == 3
    assert events[0].item_id == "a" and events[0].user_id == "u1"
    for bad in (
        [],
        {"events": []},
        {"events": [{"item_id": "a", "ts": 1}], "n": 0},
        {"events": [{"item_id": "a", "ts": 1}], "n": True},
        {"events": [{"ts": 1}]},
        {"events": ["a"]},
        {"events": [{"item_id": "a", "ts": 1}], "profile": "x"},
    ):
        with pytest.raises(RequestError):
            parse_request(bad)


def test_split_uses_last_session(recommender):
    _, cases = small_dataset()
    req = request_for(cases[0])
    _, _, events, _ = parse_request(req)
    short, long_term = recommender.split(events)
    assert [e.item_id for e in short.events] == [e.item_id for e in cases[0].prefix]
    assert set(long_term["id"]) == {e.item_id for e in cases[0].prefix[:2]}


def test_recommend_matches_offline_scoring(recommender):
    _, cases = small_dataset()
    model = recommender.model
    for case in cases[:10]:
        resp = recommender.recommend(request_for(case, n=7))
        short, long_term = recommender.split(parse_request(request_for(case))[2])
        batch = model.make_batch([short.events], [long_term], [dict(case.profile)])
        o = model.behaviour_vectors(batch)[0]
        exclude = {recommender.index.index_of(e.item_id) for e in short.events} | {OOV}
        expected = top_n(score_all(o, model.output_matrix().data), 7, exclude)
        assert [r["item_id"] for r in resp["items"]] == [model.vocab.item_id(i) for i, _ in expected]
        np.testing.assert_allclose([r["score"] for r in resp["items"]], [s for _, s in expected], rtol=0, atol=1e-12)
        assert not {r["item_id"] for r in resp["items"]} & {e.item_id for e in short.events}


def test_http_healthz(server, recommender):
    status, body = call(server, "GET", "/healthz")
    assert status == 200 and body["model_version"] == recommender.version
    assert call(server, "GET", "/nope")[0] == 404


def test_http_errors(server):
    status, body = call(server, "POST", "/recommend", {"events": [], "n": 3})
    assert status == 400 and body["error"] == "bad_request"
    status, body = call(server, "POST", "/recommend", b"{not json")
    assert status == 400 and body["error"] == "bad_json"
    assert call(server, "POST", "/other", {})[0] == 404


def test_http_matches_in_process_and_repeats(server, recommender):
    _, cases = small_dataset()
    for case in cases[:10]:
        req = request_for(case, n=5)
        s1, a = call(server, "POST", "/recommend", req)
        s2, b = call(server, "POST", "/recommend", req)
        local = recommender.recommend(req)
        assert s1 == s2 == 200
        assert a["items"] == b["items"] == local["items"]
        assert a["model_version"] == local["model_version"]
        assert len(a["items"]) == 5 and a["latency_ms"] >= 0
