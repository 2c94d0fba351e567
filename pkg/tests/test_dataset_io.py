import json
from pathlib import Path

import pytest

from drivepref.dataset_io import Dataset, load_dataset, save_dataset
from drivepref.errors import LinkError, ParseError
from drivepref.scenariogen import generate_dataset


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestRoundTrip:
    def test_save_load_save_is_identity(self, tmp_path):
        ds = generate_dataset(6, 3, seed=2)
        a = tmp_path / "a"
        b = tmp_path / "b"
        save_dataset(ds, a)
        reloaded = load_dataset(a)
        save_dataset(reloaded, b)
        assert _tree_bytes(a) == _tree_bytes(b)

    def test_counts_survive(self, tmp_path):
        ds = generate_dataset(5, 4, seed=0)
        save_dataset(ds, tmp_path / "d")
        again = load_dataset(tmp_path / "d")
        assert len(again.maps) == len(ds.maps)
        assert len(again.scenarios) == 5
        assert len(again.realizations) == 20


class TestErrors:
    def test_unknown_map_reference(self, tmp_path):
        ds = generate_dataset(3, 2, seed=1)
        root = tmp_path / "d"
        save_dataset(ds, root)
        sid = sorted(ds.scenarios)[0]
        path = root / "scenarios" / f"{sid}.json"
        obj = json.loads(path.read_text())
        obj["map_id"] = "nope"
        path.write_text(json.dumps(obj))
        with pytest.raises(LinkError, match=sid):
            load_dataset(root)

    def test_unknown_scenario_reference(self, tmp_path):
        ds = generate_dataset(3, 2, seed=1)
        root = tmp_path / "d"
        save_dataset(ds, root)
        rid = sorted(ds.realizations)[0]
        path = root / "realizations" / f"{rid}.json"
        obj = json.loads(path.read_text())
        obj["scenario_id"] = "ghost"
        path.write_text(json.dumps(obj))
        with pytest.raises(LinkError, match=rid):
            load_dataset(root)

    def test_malformed_json_names_path_and_line(self, tmp_path):
        ds = generate_dataset(3, 2, seed=1)
        root = tmp_path / "d"
        save_dataset(ds, root)
        victim = sorted((root / "maps").glob("*.json"))[0]
        victim.write_text("{\n  broken\n}")
        with pytest.raises(ParseError) as err:
            load_dataset(root)
        assert victim.name in str(err.value)
        assert ":2" in str(err.value)

    def test_missing_root(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(tmp_path / "missing")

    def test_schema_written(self, tmp_path):
        save_dataset(Dataset(), tmp_path / "d")
        assert (tmp_path / "d" / "SCHEMA.md").exists()
