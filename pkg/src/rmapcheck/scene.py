"""Scene files: schema, validation, and the built-in scene set.

A scene is a JSON document describing two chart manifolds, a map between
them, optional vector fields and ambient extension fields, a sampling
box, tolerances, and the list of checks to run.  Expressions are strings
in the package's expression grammar.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import ExprSyntaxError, SchemaError, UnknownSceneError
from .expr import parse_expression
from .manifold import ChartManifold
from .rmap import AmbientExtension, SmoothMapDef, Tolerances

BUILTIN_SCENES = (
    "paper-example",
    "identity-euclidean",
    "projection-submersion",
    "sphere-immersion",
    "hyperbolic-plane",
)


@dataclass
class Scene:
    name: str
    description: str
    source: ChartManifold
    target: ChartManifold
    mapdef: SmoothMapDef
    fields: dict
    extensions: list
    space_form_c: object
    sampling: dict
    tolerances: Tolerances
    jet_order: int
    checks: list
    raw: bytes = b""

    @property
    def digest(self):
        return hashlib.sha256(self.raw).hexdigest()

    def box_bounds(self):
        box = self.sampling["box"]
        return [tuple(box[c]) for c in self.source.coords]


def _need(data, key, kind, path):
    if key not in data:
        raise SchemaError(f"{path}.{key}", "missing required field")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def _manifold(name, spec, path, param_scope=None):
    coords = _need(spec, "coords", list, path)
    if len(set(coords)) != len(coords):
        raise SchemaError(f"{path}.coords", "coordinate names must be distinct")
    metric = _need(spec, "metric", list, path)
    params = {}
    for pname, pexpr in spec.get("params", {}).items():
        if param_scope is None:
            raise SchemaError(f"{path}.params", "parameters are only allowed on the target")
        try:
            params[pname] = parse_expression(pexpr, param_scope)
        except ExprSyntaxError as e:
            raise SchemaError(f"{path}.params.{pname}", str(e))
    try:
        return ChartManifold(name, coords, metric, params)
    except ExprSyntaxError as e:
        raise SchemaError(f"{path}.metric", str(e))


def parse_scene(data, raw=b""):
    if not isinstance(data, dict):
        raise SchemaError("$", "scene must be a JSON object")
    name = _need(data, "name", str, "$")
    manifolds = _need(data, "manifolds", dict, "$")
    msrc = _need(manifolds, "source", dict, "$.manifolds")
    mtgt = _need(manifolds, "target", dict, "$.manifolds")
    if msrc.get("params"):
        raise SchemaError("$.manifolds.source.params", "parameters are only allowed on the target")
    source = _manifold("source", msrc, "$.manifolds.source")
    target = _manifold("target", mtgt, "$.manifolds.target", param_scope=source.coords)

    comps = _need(data, "map", list, "$")
    try:
        mapdef = SmoothMapDef(source, target, comps)
    except ExprSyntaxError as e:
        raise SchemaError("$.map", str(e))

    fields = {}
    for fname, fspec in data.get("fields", {}).items():
        on = _need(fspec, "on", str, f"$.fields.{fname}")
        if on not in ("source", "target"):
            raise SchemaError(f"$.fields.{fname}.on", "must be 'source' or 'target'")
        M = source if on == "source" else target
        comps_f = _need(fspec, "components", list, f"$.fields.{fname}")
        if len(comps_f) != M.dim:
            raise SchemaError(f"$.fields.{fname}.components",
                              f"expected {M.dim} components")
        fields[fname] = (on, [parse_expression(c, M.coords, M.param_names) for c in comps_f])

    extensions = []
    for i, espec in enumerate(data.get("extensions", [])):
        role = _need(espec, "role", str, f"$.extensions[{i}]")
        efields = _need(espec, "fields", list, f"$.extensions[{i}]")
        extensions.append(AmbientExtension(role, efields, target))

    sampling = _need(data, "sampling", dict, "$")
    _need(sampling, "count", int, "$.sampling")
    _need(sampling, "seed", int, "$.sampling")
    box = _need(sampling, "box", dict, "$.sampling")
    for c in source.coords:
        if c not in box:
            raise SchemaError(f"$.sampling.box.{c}", "missing bounds for coordinate")
        lo, hi = box[c]
        if not lo < hi:
            raise SchemaError(f"$.sampling.box.{c}", "bounds must satisfy lo < hi")

    tdata = data.get("tolerances", {})
    tols = Tolerances(
        tol=float(tdata.get("tol", 1e-8)),
        rank_tol=float(tdata.get("rank_tol", 1e-8)),
        pd_tol=float(tdata.get("pd_tol", 1e-10)),
        class_tol=float(tdata.get("class_tol", 1e-7)),
        ext_tol=float(tdata.get("ext_tol", 1e-8)),
    )

    checks = data.get("checks", [])
    from .checks import REGISTRY

    for i, cspec in enumerate(checks):
        cname = _need(cspec, "name", str, f"$.checks[{i}]")
        if cname not in REGISTRY:
            raise SchemaError(f"$.checks[{i}].name", f"unknown check '{cname}'")

    return Scene(
        name=name,
        description=data.get("description", ""),
        source=source,
        target=target,
        mapdef=mapdef,
        fields=fields,
        extensions=extensions,
        space_form_c=data.get("space_form_c"),
        sampling=sampling,
        tolerances=tols,
        jet_order=int(data.get("jet_order", 4)),
        checks=checks,
        raw=raw,
    )


def loads_scene(text):
    raw = text.encode() if isinstance(text, str) else text
    try:
        data = json.loads(raw.decode())
    except json.JSONDecodeError as e:
        raise ExprSyntaxError(f"scene text is not valid JSON (line {e.lineno}, column {e.colno})", e.pos)
    return parse_scene(data, raw)


def load_scene(path):
    with open(path, "rb") as f:
        raw = f.read()
    return loads_scene(raw)


def builtin_scene_text(name):
    """Exact text of a built-in scene file."""
    if name not in BUILTIN_SCENES:
        raise UnknownSceneError(
            f"unknown scene '{name}'; available: {', '.join(BUILTIN_SCENES)}"
        )
    ref = resources.files("rmapcheck") / "scenes" / f"{name}.json"
    return ref.read_text()


def builtin_scene(name):
    return loads_scene(builtin_scene_text(name))
