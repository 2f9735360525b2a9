"""Live pouring session behind a WebSocket endpoint.

One session steps a single trial at wall-clock pace (a speed factor scales
sim time against real time; zero or negative means flat out).  Every
simulation step broadcasts one frame to all connected clients; commands
(inject, set_goal, pause, resume, reset) queue up and are applied in
arrival order at the next step boundary, at most one batch per step.

Fan-out never blocks the loop: each subscriber has a bounded queue and
slow consumers drop frames.  Every message carries the protocol version.
"""

from __future__ import annotations

import asyncio
import json
from contextlib import asynccontextmanager
from dataclasses import replace

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .catalog import ScenarioCatalog
from .controller import GOAL_SETTLED_STEPS, ControllerState, control_step
from .harness import TrainedStack
from .perception import NoiseConfig, observe
from .sim import (
    PourEvent,
    effective_threshold_deg,
    init_scenario,
    inject_event,
    judge_trial,
    step,
)

PROTOCOL_VERSION = 1
SUBSCRIBER_QUEUE_SIZE = 256
IDLE_SLEEP_S = 0.01


class LiveSession:
    def __init__(
        self,
        stack: TrainedStack,
        catalog: ScenarioCatalog,
        scene_id: int,
        noise: NoiseConfig,
        lam: float = 0.2,
        seed: int = 0,
        speed_factor: float = 1.0,
    ):
        self.stack = stack
        self.catalog = catalog
        self.noise = noise
        self.seed = seed
        self.speed_factor = speed_factor
        self.cfg = stack.controller_config(lam)
        self.commands: asyncio.Queue = asyncio.Queue()
        self.subscribers: set[asyncio.Queue] = set()
        self.paused = False
        self._reset(scene_id)

    # -- state ------------------------------------------------------------

    def _reset(self, scene_id: int) -> None:
        self.scene_id = scene_id
        self.scenario = self.catalog.get(scene_id).config
        self.sim_state = init_scenario(self.scenario)
        self.ctrl = ControllerState(prev_theta=self.sim_state.tilt_deg)
        self.rng = np.random.default_rng(self.seed)
        self.sim_trace = [self.sim_state]
        self.last_pair = None
        self.done = False
        self._settled = 0

    def meta_message(self) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "type": "meta",
            "scene_id": self.scene_id,
            "capacity_ml": self.scenario.target_capacity_ml,
            "n_states": self.stack.model.n_states,
            "s_goal": self.cfg.s_goal,
            "lambda": self.cfg.lam,
            "speed_factor": self.speed_factor,
        }

    # -- commands ---------------------------------------------------------

    def apply_command(self, cmd: dict) -> None:
        kind = cmd.get("type")
        if kind == "inject":
            ev = PourEvent(
                kind=cmd.get("kind", "add_liquid"),
                volume_ml=float(cmd["volume_ml"]),
                at_step=self.sim_state.t,
            )
            self.sim_state = inject_event(self.sim_state, ev, self.scenario)
            self.sim_trace[-1] = self.sim_state
        elif kind == "set_goal":
            s_goal = int(cmd["s_goal"])
            if not 1 <= s_goal <= self.stack.model.n_states:
                raise ValueError(f"s_goal must be in [1, {self.stack.model.n_states}]")
            self.cfg = replace(self.cfg, s_goal=s_goal)
            self.broadcast(self.meta_message())  # lets clients confirm the new goal
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        elif kind == "reset":
            self._reset(int(cmd.get("scene_id", self.scene_id)))
            self.broadcast(self.meta_message())
        else:
            raise ValueError(f"unknown command type {kind!r}")

    # -- stepping ---------------------------------------------------------

    def step_once(self) -> dict:
        obs = observe(self.sim_state, self.scenario, self.noise, self.rng)
        _, theta, self.ctrl, record = control_step(
            self.ctrl, self.cfg, self.stack.envelope, self.stack.model, obs
        )
        realized = (theta - self.sim_state.tilt_deg) / self.scenario.timestep_s
        self.sim_state = step(self.sim_state, self.scenario, realized)
        self.sim_trace.append(self.sim_state)

        pair = (record.phase, record.state)
        graph_delta = None
        if pair != self.last_pair:
            self.last_pair = pair
            graph_delta = {
                "t": record.t,
                "phase": record.phase,
                "state": record.state,
                "phase_prob": record.probs_phase[record.phase],
                "state_prob": record.probs_state[record.state]
                if record.state < len(record.probs_state) else 0.0,
            }
        if record.phase == 3 and abs(self.sim_state.tilt_deg) <= 1.0:
            self.done = True
        elif (
            record.state >= self.cfg.s_goal
            and self.sim_state.flow_ml_per_s == 0.0
            and self.sim_state.tilt_deg
            <= effective_threshold_deg(self.scenario, self.sim_state.source_ml) + 0.5
        ):
            self._settled += 1
            if self._settled >= GOAL_SETTLED_STEPS:
                self.done = True
        else:
            self._settled = 0
        return {
            "v": PROTOCOL_VERSION,
            "type": "frame",
            "t": record.t,
            "sim": {
                "source_ml": self.sim_state.source_ml,
                "target_ml": self.sim_state.target_ml,
                "spilled_ml": self.sim_state.spilled_ml,
                "tilt_deg": self.sim_state.tilt_deg,
                "flow": self.sim_state.flow_ml_per_s,
            },
            "ctrl": {
                "phase": record.phase,
                "state": record.state,
                "probs_phase": list(record.probs_phase),
                "probs_state": list(record.probs_state),
                "omega": record.omega_clamped,
                "theta": record.theta,
            },
            "graph_delta": graph_delta,
        }

    def done_message(self) -> dict:
        outcome = judge_trial(self.sim_trace, self.scenario)
        return {
            "v": PROTOCOL_VERSION,
            "type": "done",
            "outcome": {
                "success": outcome.success,
                "final_fill_fraction": outcome.final_fill_fraction,
                "spilled": outcome.spilled,
                "steps": outcome.steps,
            },
        }

    # -- fan-out ----------------------------------------------------------

    def broadcast(self, message: dict) -> None:
        for q in list(self.subscribers):
            try:
                q.put_nowait(message)
            except asyncio.QueueFull:
                pass  # slow subscriber: drop, never stall the loop

    async def run(self) -> None:
        period = None
        if self.speed_factor > 0:
            period = self.scenario.timestep_s / self.speed_factor
        loop = asyncio.get_running_loop()
        deadline = loop.time()
        while True:
            if not self.subscribers:
                # Nobody watching: hold the trial so a client sees it from
                # the start.
                deadline = loop.time()
                await asyncio.sleep(IDLE_SLEEP_S)
                continue
            batch = []
            while not self.commands.empty():
                batch.append(self.commands.get_nowait())
            for cmd in batch:
                try:
                    self.apply_command(cmd)
                except (KeyError, ValueError, TypeError) as exc:
                    self.broadcast(error_message(str(exc)))

            if self.paused or self.done:
                deadline = loop.time()
                await asyncio.sleep(IDLE_SLEEP_S)
                continue

            self.broadcast(self.step_once())
            if self.done:
                self.broadcast(self.done_message())
                continue

            if period is None:
                await asyncio.sleep(0)
                continue
            deadline += period
            now = loop.time()
            if deadline > now:
                await asyncio.sleep(deadline - now)
            elif now - deadline > 1.0:
                deadline = now  # fell far behind: resync instead of bursting


def error_message(detail: str) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error", "detail": detail}


def create_app(
    stack: TrainedStack,
    catalog: ScenarioCatalog,
    scene_id: int,
    noise: NoiseConfig,
    lam: float = 0.2,
    seed: int = 0,
    speed_factor: float = 1.0,
) -> FastAPI:
    session = LiveSession(
        stack, catalog, scene_id, noise,
        lam=lam, seed=seed, speed_factor=speed_factor,
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runner = asyncio.create_task(session.run())
        yield
        runner.cancel()

    app = FastAPI(lifespan=lifespan)
    app.state.session = session

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        inbox: asyncio.Queue = asyncio.Queue(maxsize=SUBSCRIBER_QUEUE_SIZE)
        session.subscribers.add(inbox)
        await ws.send_json(session.meta_message())

        async def pump_out():
            while True:
                await ws.send_json(await inbox.get())

        out_task = asyncio.create_task(pump_out())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    cmd = json.loads(raw)
                    if not isinstance(cmd, dict) or "type" not in cmd:
                        raise ValueError("commands must be objects with a type")
                    session.commands.put_nowait(cmd)
                except (json.JSONDecodeError, ValueError) as exc:
                    await ws.send_json(error_message(f"malformed command: {exc}"))
        except WebSocketDisconnect:
            pass
        finally:
            out_task.cancel()
            session.subscribers.discard(inbox)

    return app
