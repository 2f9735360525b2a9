"""Scene catalog: the pouring scenarios demos and experiments draw from.

Twenty "seen" scenes feed demonstration collection; the rest are held out
as unseen evaluation scenes.  Novelty for the held-out scenes means
container capacities and flow parameters the demos never used (drink and
container labels are cosmetic metadata).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .sim import ScenarioConfig, container_class_for


@dataclass(frozen=True)
class CatalogEntry:
    scene_id: int
    config: ScenarioConfig
    tag: str            # "seen" | "unseen"
    drink: str
    container: str

    def __post_init__(self):
        if self.tag not in ("seen", "unseen"):
            raise ValueError("tag must be seen or unseen")


class ScenarioCatalog:
    def __init__(self, entries):
        self.entries = {}
        for e in entries:
            if e.scene_id in self.entries:
                raise ValueError(f"duplicate scene id {e.scene_id}")
            e.config.validate()
            self.entries[e.scene_id] = e

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries.values(), key=lambda e: e.scene_id))

    def get(self, scene_id: int) -> CatalogEntry:
        if scene_id not in self.entries:
            raise KeyError(f"unknown scene id {scene_id}")
        return self.entries[scene_id]

    def ids(self, tag: str | None = None) -> list[int]:
        return [e.scene_id for e in self if tag is None or e.tag == tag]

    def to_json(self) -> str:
        return json.dumps([
            {
                "scene_id": e.scene_id,
                "tag": e.tag,
                "drink": e.drink,
                "container": e.container,
                "config": json.loads(e.config.to_json()),
            }
            for e in self
        ])

    @classmethod
    def from_json(cls, doc: str) -> "ScenarioCatalog":
        return cls(
            CatalogEntry(
                scene_id=d["scene_id"],
                config=ScenarioConfig(**d["config"]),
                tag=d["tag"],
                drink=d["drink"],
                container=d["container"],
            )
            for d in json.loads(doc)
        )


_DRINKS = ("coffee", "tea", "juice")
_SHAPES = {"small": "bowl", "medium": "cone", "big": "cylinder"}

# (capacity ml, flow threshold deg, flow gain); seen rows span the ranges,
# unseen rows sit inside them at combinations never demonstrated.
_SEEN_SPECS = [
    (80, 24.0, 1.10), (120, 25.0, 1.20), (160, 26.0, 1.30), (170, 24.5, 1.15),
    (180, 25.5, 1.25), (130, 26.5, 1.05), (165, 23.5, 1.35), (90, 25.0, 1.20),
    (125, 24.0, 1.30), (140, 26.0, 1.10), (175, 25.0, 1.40), (135, 23.0, 1.20),
    (85, 26.5, 1.25), (145, 24.5, 1.05), (185, 25.5, 1.30), (150, 26.0, 1.20),
    (190, 24.0, 1.10), (95, 25.5, 1.35), (88, 23.5, 1.15), (128, 26.0, 1.25),
]
_UNSEEN_SPECS = [
    (92, 24.8, 1.18), (168, 25.2, 1.22), (138, 24.2, 1.28), (82, 25.8, 1.12),
    (97, 24.4, 1.32), (86, 26.2, 1.08), (172, 23.8, 1.24), (182, 25.4, 1.16),
    (178, 24.6, 1.34), (132, 25.6, 1.14), (94, 23.6, 1.26), (142, 26.4, 1.20),
    (84, 25.1, 1.30), (188, 24.9, 1.10),
]


def _entry(scene_id: int, spec, tag: str) -> CatalogEntry:
    capacity, threshold, gain = spec
    cls = container_class_for(capacity)
    cfg = ScenarioConfig(
        target_capacity_ml=float(capacity),
        source_initial_ml=float(capacity) * 1.4,
        initial_target_ml=0.0,
        n_states=8,
        container_class=cls,
        flow_threshold_deg=threshold,
        flow_gain=gain,
        seed=scene_id,
    )
    return CatalogEntry(
        scene_id=scene_id,
        config=cfg,
        tag=tag,
        drink=_DRINKS[scene_id % len(_DRINKS)],
        container=_SHAPES[cls],
    )


def default_catalog() -> ScenarioCatalog:
    entries = [_entry(i + 1, spec, "seen") for i, spec in enumerate(_SEEN_SPECS)]
    entries += [
        _entry(len(_SEEN_SPECS) + i + 1, spec, "unseen")
        for i, spec in enumerate(_UNSEEN_SPECS)
    ]
    return ScenarioCatalog(entries)
