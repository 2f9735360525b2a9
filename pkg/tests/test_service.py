import json
import time

import pytest
from fastapi.testclient import TestClient

from pourlearn.perception import NoiseConfig
from pourlearn.service import PROTOCOL_VERSION, create_app


@pytest.fixture()
def client(stack, catalog):
    app = create_app(
        stack, catalog, scene_id=2, noise=NoiseConfig(),
        lam=0.2, seed=5, speed_factor=0.0,  # flat out for tests
    )
    with TestClient(app) as c:
        yield c


def recv_until(ws, predicate, limit=3000):
    for _ in range(limit):
        msg = ws.receive_json()
        if predicate(msg):
            return msg
    raise AssertionError("message not seen within limit")


def test_meta_then_frames_with_version(client):
    with client.websocket_connect("/ws") as ws:
        meta = ws.receive_json()
        assert meta["type"] == "meta"
        assert meta["v"] == PROTOCOL_VERSION
        assert meta["capacity_ml"] > 0
        frame = recv_until(ws, lambda m: m["type"] == "frame")
        assert {"t", "sim", "ctrl", "graph_delta"} <= set(frame)
        assert frame["v"] == PROTOCOL_VERSION
        assert len(frame["ctrl"]["probs_phase"]) == 4


def test_frames_monotone_t(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        last = -1
        for _ in range(50):
            msg = ws.receive_json()
            if msg["type"] != "frame":
                continue
            assert msg["t"] > last
            last = msg["t"]


def test_inject_raises_level_next_frame(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        first = recv_until(ws, lambda m: m["type"] == "frame")
        before = first["sim"]["target_ml"]
        ws.send_text(json.dumps({"v": 1, "type": "inject", "kind": "add_liquid", "volume_ml": 20.0}))
        raised = recv_until(
            ws, lambda m: m["type"] == "frame" and m["sim"]["target_ml"] >= before + 19.0, limit=50
        )
        assert raised["sim"]["target_ml"] >= before + 19.0


def test_set_goal_reduces_final_volume(stack, catalog):
    finals = {}
    for goal in (None, 3):
        app = create_app(stack, catalog, scene_id=2, noise=NoiseConfig(),
                         lam=0.2, seed=5, speed_factor=0.0)
        with TestClient(app) as c, c.websocket_connect("/ws") as ws:
            ws.receive_json()
            if goal is not None:
                ws.send_text(json.dumps({"v": 1, "type": "set_goal", "s_goal": goal}))
            done = recv_until(ws, lambda m: m["type"] == "done", limit=6000)
            finals[goal] = done["outcome"]["final_fill_fraction"]
    k = catalog.get(2).config.state_resolution_ml / catalog.get(2).config.target_capacity_ml
    assert finals[None] - finals[3] >= k


def test_pause_freezes_simulation(client):
    session = client.app.state.session
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        recv_until(ws, lambda m: m["type"] == "frame")
        ws.send_text(json.dumps({"v": 1, "type": "pause"}))
        deadline = time.time() + 2.0
        while not session.paused and time.time() < deadline:
            time.sleep(0.01)
        assert session.paused
        frozen_t = session.sim_state.t
        time.sleep(0.25)  # the free-running loop would advance thousands of steps
        assert session.sim_state.t == frozen_t
        ws.send_text(json.dumps({"v": 1, "type": "resume"}))
        deadline = time.time() + 2.0
        while session.sim_state.t == frozen_t and time.time() < deadline:
            time.sleep(0.01)
        assert session.sim_state.t > frozen_t


def test_malformed_command_yields_error_and_continues(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        ws.send_text("this is not json")
        err = recv_until(ws, lambda m: m["type"] == "error", limit=200)
        assert "malformed" in err["detail"]
        ws.send_text(json.dumps({"v": 1, "type": "set_goal", "s_goal": 99}))
        err2 = recv_until(ws, lambda m: m["type"] == "error", limit=200)
        assert "s_goal" in err2["detail"]
        frame = recv_until(ws, lambda m: m["type"] == "frame")
        assert frame["v"] == PROTOCOL_VERSION


def test_reset_restarts_session(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        recv_until(ws, lambda m: m["type"] == "frame" and m["t"] > 30)
        ws.send_text(json.dumps({"v": 1, "type": "reset", "scene_id": 3}))
        fresh = recv_until(ws, lambda m: m["type"] == "frame" and m["t"] < 5, limit=500)
        assert fresh["sim"]["tilt_deg"] < 5.0


def test_session_runs_to_done(client):
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()
        done = recv_until(ws, lambda m: m["type"] == "done", limit=6000)
        assert done["outcome"]["success"] is True
