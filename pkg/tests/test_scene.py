"""Scene parsing, schema validation, and the built-in set."""

import json

import pytest

from rmapcheck.errors import (
    ExprSyntaxError,
    SchemaError,
    UnknownIdentifierError,
    UnknownSceneError,
)
from rmapcheck.scene import (
    BUILTIN_SCENES,
    builtin_scene,
    builtin_scene_text,
    loads_scene,
)


def minimal_scene():
    return {
        "name": "tiny",
        "manifolds": {
            "source": {"coords": ["x", "y"], "metric": [["1", "0"], ["0", "1"]]},
            "target": {"coords": ["u", "v"], "metric": [["1", "0"], ["0", "1"]]},
        },
        "map": ["x", "y"],
        "sampling": {"count": 4, "seed": 9, "box": {"x": [0, 1], "y": [0, 1]}},
        "checks": [{"name": "riemannian"}],
    }


def test_minimal_scene_parses():
    scene = loads_scene(json.dumps(minimal_scene()))
    assert scene.name == "tiny"
    assert scene.source.dim == 2 and scene.target.dim == 2
    assert scene.jet_order == 4


def test_all_builtins_parse():
    for name in BUILTIN_SCENES:
        scene = builtin_scene(name)
        assert scene.name == name
        assert scene.checks


def test_builtin_text_is_exact_file(tmp_path):
    text = builtin_scene_text("paper-example")
    # the emitted text is the shipped file, byte for byte re-parseable
    scene1 = loads_scene(text)
    scene2 = builtin_scene("paper-example")
    assert scene1.digest == scene2.digest


def test_unknown_builtin():
    with pytest.raises(UnknownSceneError):
        builtin_scene_text("nope")


def test_paper_scene_shape():
    scene = builtin_scene("paper-example")
    assert scene.source.dim == 3
    assert scene.target.dim == 2
    assert "w" in scene.target.param_names


def test_invalid_json_reports_position():
    with pytest.raises(ExprSyntaxError) as exc:
        loads_scene("{\n  \"name\": oops\n}")
    assert "line 2" in str(exc.value)


def test_asymmetric_metric_rejected():
    data = minimal_scene()
    data["manifolds"]["source"]["metric"] = [["1", "x"], ["0", "1"]]
    with pytest.raises(SchemaError) as exc:
        loads_scene(json.dumps(data))
    assert "metric" in str(exc.value)


def test_undeclared_coordinate_rejected():
    data = minimal_scene()
    data["map"] = ["x", "z"]
    with pytest.raises(UnknownIdentifierError):
        loads_scene(json.dumps(data))


def test_missing_field_rejected():
    data = minimal_scene()
    del data["sampling"]
    with pytest.raises(SchemaError) as exc:
        loads_scene(json.dumps(data))
    assert "sampling" in str(exc.value)


def test_missing_box_coordinate_rejected():
    data = minimal_scene()
    del data["sampling"]["box"]["y"]
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))


def test_bad_box_bounds_rejected():
    data = minimal_scene()
    data["sampling"]["box"]["x"] = [1.0, 1.0]
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))


def test_unknown_check_rejected():
    data = minimal_scene()
    data["checks"] = [{"name": "not-a-check"}]
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))


def test_source_params_rejected():
    data = minimal_scene()
    data["manifolds"]["source"]["params"] = {"w": "u"}
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))


def test_field_component_count_checked():
    data = minimal_scene()
    data["fields"] = {"bad": {"on": "target", "components": ["1"]}}
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))


def test_wrong_map_component_count():
    data = minimal_scene()
    data["map"] = ["x"]
    with pytest.raises(SchemaError):
        loads_scene(json.dumps(data))
