import hashlib
import json

import pytest

from latentknn import __version__
from latentknn.run_manifest import RunManifest, dumps, file_digest


def test_file_digest(tmp_path):
    path = tmp_path / "data.csv"
    path.write_bytes(b"2,2\n1,1,5.0\n")
    assert file_digest(path) == hashlib.sha256(b"2,2\n1,1,5.0\n").hexdigest()


def test_embedded_manifest_drops_duration(tmp_path):
    path = tmp_path / "in.csv"
    path.write_text("1,1\n")
    manifest = RunManifest("complete", {"k": 5}, seed=3)
    manifest.add_input("input", path)
    manifest.set_duration(1.2345678)

    full = manifest.to_dict()
    assert full["duration_seconds"] == 1.234568
    assert full["version"] == __version__
    embedded = manifest.embedded()
    assert "duration_seconds" not in embedded
    assert embedded["input_digests"] == {"input": file_digest(path)}
    assert embedded["seed"] == 3


def test_same_run_ignores_timing():
    first = RunManifest("complete", {"k": 5})
    second = RunManifest("complete", {"k": 5})
    first.set_duration(1.0)
    second.set_duration(9.0)
    assert first.same_run(second)
    assert not first.same_run(RunManifest("complete", {"k": 6}))


def test_config_is_copied():
    config = {"k": 5}
    manifest = RunManifest("complete", config)
    config["k"] = 6
    assert manifest.config == {"k": 5}


def test_save_and_load(tmp_path):
    manifest = RunManifest("synth", {"p": 0.5}, seed=1)
    manifest.set_duration(0.5)
    manifest.save(tmp_path / "out")
    loaded = RunManifest.load(tmp_path / "out" / RunManifest.MANIFEST_FILENAME)
    assert loaded.to_dict() == manifest.to_dict()
    assert loaded.command == "synth"


def test_load_missing_or_corrupt(tmp_path):
    assert RunManifest.load(tmp_path / "absent.json") is None
    (tmp_path / "bad.json").write_text("{")
    assert RunManifest.load(tmp_path / "bad.json") is None


def test_report_is_canonical():
    manifest = RunManifest("evaluate", {"scope": "test-set"})
    text = manifest.report({"mse": 0.25, "cells": 4})
    assert text.endswith("\n")
    document = json.loads(text)
    assert document["manifest"]["command"] == "evaluate"
    assert list(document) == sorted(document)
    assert manifest.report({"cells": 4, "mse": 0.25}) == text


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        dumps({"mse": float("nan")})
