import json

import pytest

from dmn import io


def test_atomic_write_and_manifest(tmp_path):
    out = tmp_path / "sub" / "a.json"
    io.write_json(out, {"b": 1, "a": [1.5]})
    assert json.loads(out.read_text()) == {"a": [1.5], "b": 1}
    assert list(out.parent.glob("*.tmp")) == []
    io.write_manifest(out, "demo", {"x": 1}, ["in.json"], [out], seed=3, wall_time=0.5)
    m = json.loads(io.manifest_path(out).read_text())
    assert m["command"] == "demo" and m["seed"] == 3 and m["config_hash"] == io.config_hash({"x": 1})
    assert io.manifest_path(out).name == "a.json.manifest.json"


def test_failed_write_leaves_target_intact(tmp_path, monkeypatch):
    out = tmp_path / "a.txt"
    out.write_text("old")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write(out, "new")
    assert out.read_text() == "old"
    assert list(tmp_path.glob("*.tmp")) == []


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "a": 1,\n  "b": ]\n}')
    with pytest.raises(io.InputError, match="line 3, column 8"):
        io.read_json(p)
    q = tmp_path / "bad.jsonl"
    q.write_text('{"a": 1}\n{"a": oops}\n')
    with pytest.raises(io.InputError, match="line 2"):
        io.read_jsonl(q)


def test_missing_file(tmp_path):
    with pytest.raises(io.InputError, match="not found"):
        io.read_text(tmp_path / "nope")
