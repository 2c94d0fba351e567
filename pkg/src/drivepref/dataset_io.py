"""Dataset directory IO.

One directory per dataset: ``maps/*.json``, ``scenarios/*.json``,
``realizations/*.json``. All numbers are SI with unit-suffixed keys
(``_m``, ``_s``, ``_mps``, ``_rad``); coordinates are map-local Cartesian.
A ``SCHEMA.md`` describing the format is written next to the data.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from shapely.geometry import Polygon

from .errors import LinkError, ParseError
from .world import (Agent, ConflictZone, Lane, Map, Realization, Scenario,
                    Trajectory, validate_map, validate_realization,
                    validate_scenario)

TRAJECTORY_COLUMNS = ["t_s", "x_m", "y_m", "heading_rad", "speed_mps"]

SCHEMA_TEXT = """\
# Dataset directory schema

```
<root>/
  maps/<map_id>.json
  scenarios/<scenario_id>.json
  realizations/<realization_id>.json
```

All numbers are SI: meters (`_m`), seconds (`_s`), meters/second (`_mps`),
radians (`_rad`). Coordinates are map-local planar Cartesian; polygons are
simple rings given as `[[x, y], ...]` without a repeated closing point.

## maps/*.json
- `id`: string
- `drivable_area_m`: list of polygons whose union is the drivable surface
- `lanes`: list of `{id, centerline_m, left_boundary_m, right_boundary_m,
  direction ("forward"|"reverse" w.r.t. point order), successor_ids}`
- `crosswalks_m`: list of polygons
- `speed_limit_zones`: list of `{polygon_m, limit_mps}`

## scenarios/*.json
- `id`, `map_id`: strings
- `duration_s`: scenario length; agent trajectories lie within `[0, duration_s]`
- `agents`: list of `{id, kind ("vehicle"|"pedestrian"|"parked_vehicle"),
  length_m, width_m, trajectory, right_of_way_zone_ids}`
- `conflict_zones`: list of `{id, polygon_m}`
- trajectory: `{"columns": ["t_s","x_m","y_m","heading_rad","speed_mps"],
  "samples": [[...], ...]}` with strictly increasing `t_s`

## realizations/*.json
- `id`, `scenario_id`: strings
- `ego`: an agent object (kind "vehicle") whose trajectory covers
  `[0, duration_s]` of the referenced scenario
"""


@dataclass
class Dataset:
    maps: dict[str, Map] = field(default_factory=dict)
    scenarios: dict[str, Scenario] = field(default_factory=dict)
    realizations: dict[str, Realization] = field(default_factory=dict)

    def scenario_of(self, realization_id: str) -> Scenario:
        return self.scenarios[self.realizations[realization_id].scenario_id]

    def map_of(self, scenario_id: str) -> Map:
        return self.maps[self.scenarios[scenario_id].map_id]


# -- encoding --------------------------------------------------------------

def _poly_to_json(p: Polygon) -> list[list[float]]:
    coords = list(p.exterior.coords)[:-1]
    return [[float(x), float(y)] for x, y in coords]


def _poly_from_json(rows) -> Polygon:
    return Polygon([(float(x), float(y)) for x, y in rows])


def _traj_to_json(tr: Trajectory) -> dict:
    return {"columns": TRAJECTORY_COLUMNS,
            "samples": [[float(v) for v in row] for row in tr.samples()]}


def _traj_from_json(obj, path) -> Trajectory:
    if obj.get("columns") != TRAJECTORY_COLUMNS:
        raise ParseError(f"trajectory columns must be {TRAJECTORY_COLUMNS}", path)
    return Trajectory(obj["samples"])


def _agent_to_json(a: Agent) -> dict:
    return {
        "id": a.id, "kind": a.kind,
        "length_m": a.length, "width_m": a.width,
        "trajectory": _traj_to_json(a.trajectory),
        "right_of_way_zone_ids": sorted(a.right_of_way_zone_ids),
    }


def _agent_from_json(obj, path) -> Agent:
    return Agent(
        id=obj["id"], kind=obj["kind"],
        length=float(obj["length_m"]), width=float(obj["width_m"]),
        trajectory=_traj_from_json(obj["trajectory"], path),
        right_of_way_zone_ids=frozenset(obj.get("right_of_way_zone_ids", [])),
    )


def map_to_json(m: Map) -> dict:
    return {
        "id": m.id,
        "drivable_area_m": [_poly_to_json(p) for p in m.drivable_area],
        "lanes": [{
            "id": l.id,
            "centerline_m": [[float(x), float(y)] for x, y in l.centerline],
            "left_boundary_m": [[float(x), float(y)] for x, y in l.left_boundary],
            "right_boundary_m": [[float(x), float(y)] for x, y in l.right_boundary],
            "direction": l.direction,
            "successor_ids": list(l.successor_ids),
        } for l in m.lanes],
        "crosswalks_m": [_poly_to_json(p) for p in m.crosswalks],
        "speed_limit_zones": [{"polygon_m": _poly_to_json(p), "limit_mps": lim}
                              for p, lim in m.speed_limit_zones],
    }


def map_from_json(obj, path=None) -> Map:
    return Map(
        id=obj["id"],
        drivable_area=[_poly_from_json(p) for p in obj["drivable_area_m"]],
        lanes=[Lane(
            id=l["id"], centerline=l["centerline_m"],
            left_boundary=l["left_boundary_m"], right_boundary=l["right_boundary_m"],
            direction=l.get("direction", "forward"),
            successor_ids=tuple(l.get("successor_ids", [])),
        ) for l in obj.get("lanes", [])],
        crosswalks=[_poly_from_json(p) for p in obj.get("crosswalks_m", [])],
        speed_limit_zones=[(_poly_from_json(z["polygon_m"]), float(z["limit_mps"]))
                           for z in obj.get("speed_limit_zones", [])],
    )


def scenario_to_json(s: Scenario) -> dict:
    return {
        "id": s.id, "map_id": s.map_id, "duration_s": s.duration,
        "agents": [_agent_to_json(a) for a in s.agents],
        "conflict_zones": [{"id": z.id, "polygon_m": _poly_to_json(z.polygon)}
                           for z in s.conflict_zones],
    }


def scenario_from_json(obj, path=None) -> Scenario:
    return Scenario(
        id=obj["id"], map_id=obj["map_id"], duration=float(obj["duration_s"]),
        agents=[_agent_from_json(a, path) for a in obj.get("agents", [])],
        conflict_zones=[ConflictZone(z["id"], _poly_from_json(z["polygon_m"]))
                        for z in obj.get("conflict_zones", [])],
    )


def realization_to_json(r: Realization) -> dict:
    return {"id": r.id, "scenario_id": r.scenario_id, "ego": _agent_to_json(r.ego)}


def realization_from_json(obj, path=None) -> Realization:
    return Realization(id=obj["id"], scenario_id=obj["scenario_id"],
                       ego=_agent_from_json(obj["ego"], path))


# -- directory IO ----------------------------------------------------------

def atomic_write_text(path: Path, text: str) -> None:
    """Write via temp file + rename so partial output is never visible."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_dataset(dataset: Dataset, root: str | Path) -> None:
    root = Path(root)
    for m in dataset.maps.values():
        atomic_write_text(root / "maps" / f"{m.id}.json", _dump(map_to_json(m)))
    for s in dataset.scenarios.values():
        atomic_write_text(root / "scenarios" / f"{s.id}.json", _dump(scenario_to_json(s)))
    for r in dataset.realizations.values():
        atomic_write_text(root / "realizations" / f"{r.id}.json",
                          _dump(realization_to_json(r)))
    atomic_write_text(root / "SCHEMA.md", SCHEMA_TEXT)


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno) from e


def load_dataset(root: str | Path, validate: bool = True) -> Dataset:
    """Load and cross-link a dataset directory.

    Unknown ``map_id``/``scenario_id`` references raise LinkError naming the
    offending file; malformed JSON raises ParseError with path and line.
    """
    root = Path(root)
    if not root.is_dir():
        raise ParseError("dataset root is not a directory", path=root)
    ds = Dataset()
    for path in sorted((root / "maps").glob("*.json")):
        try:
            m = map_from_json(_load_json(path), path)
        except (KeyError, TypeError) as e:
            raise ParseError(f"malformed map file ({e})", path=path) from e
        ds.maps[m.id] = m
    for path in sorted((root / "scenarios").glob("*.json")):
        try:
            s = scenario_from_json(_load_json(path), path)
        except (KeyError, TypeError) as e:
            raise ParseError(f"malformed scenario file ({e})", path=path) from e
        if s.map_id not in ds.maps:
            raise LinkError(f"scenario {s.id!r} references unknown map {s.map_id!r}")
        ds.scenarios[s.id] = s
    for path in sorted((root / "realizations").glob("*.json")):
        try:
            r = realization_from_json(_load_json(path), path)
        except (KeyError, TypeError) as e:
            raise ParseError(f"malformed realization file ({e})", path=path) from e
        if r.scenario_id not in ds.scenarios:
            raise LinkError(
                f"realization {r.id!r} references unknown scenario {r.scenario_id!r}")
        ds.realizations[r.id] = r
    if validate:
        for m in ds.maps.values():
            validate_map(m)
        for s in ds.scenarios.values():
            validate_scenario(s, ds.maps[s.map_id])
        for r in ds.realizations.values():
            validate_realization(r, ds.scenarios[r.scenario_id])
    return ds
