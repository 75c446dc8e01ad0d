"""Command-line interface.

Subcommands:
  validate <scene>   parse and validate a scene file
  check <scene>      run the scene's checks over sampled points
  scene <name>       print a built-in scene file

Exit codes: 0 all checks pass, 1 check failure, 2 scene error,
3 numeric domain error during evaluation.
"""

from __future__ import annotations

import argparse
import sys

from .checks import exit_code, run_checks
from .errors import (
    ExprSyntaxError,
    RmapError,
    SchemaError,
    UnknownIdentifierError,
    UnknownSceneError,
)
from .scene import BUILTIN_SCENES, builtin_scene, builtin_scene_text, load_scene


def _build_parser():
    p = argparse.ArgumentParser(
        prog="rmapcheck",
        description="Verify curvature, soliton and harmonicity identities of "
                    "maps between chart-defined Riemannian manifolds.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="parse and validate a scene file")
    v.add_argument("scene", help="scene file path or built-in scene name")

    c = sub.add_parser("check", help="run a scene's checks")
    c.add_argument("scene", help="scene file path or built-in scene name")
    c.add_argument("--tol", type=float, help="override the pass tolerance")
    c.add_argument("--rank-tol", type=float, help="override the rank tolerance")
    c.add_argument("--seed", type=int, help="override the sampling seed")
    c.add_argument("--samples", type=int, help="override the sample count")
    c.add_argument("--jet-order", type=int, help="override the jet order")
    c.add_argument("--threads", type=int, default=1, help="point-level worker threads")
    c.add_argument("--json", metavar="PATH", help="also write the report as JSON")
    c.add_argument("--check", action="append", metavar="NAME",
                   help="run only the named check (repeatable)")
    c.add_argument("--lambda", dest="lam", metavar="VALUE|fit",
                   help="override the soliton constant for checks that fit one")

    s = sub.add_parser("scene", help="print a built-in scene file")
    s.add_argument("name", help=f"one of: {', '.join(BUILTIN_SCENES)}")
    return p


def _load(ref):
    if ref in BUILTIN_SCENES:
        return builtin_scene(ref)
    return load_scene(ref)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "scene":
            sys.stdout.write(builtin_scene_text(args.name))
            return 0
        if args.command == "validate":
            scene = _load(args.scene)
            n_checks = len(scene.checks)
            print(f"ok: scene '{scene.name}' valid "
                  f"(source dim {scene.source.dim}, target dim {scene.target.dim}, "
                  f"{n_checks} checks)")
            return 0
        scene = _load(args.scene)
        overrides = {}
        if args.tol is not None:
            overrides["tol"] = args.tol
        if args.rank_tol is not None:
            overrides["rank_tol"] = args.rank_tol
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.samples is not None:
            overrides["samples"] = args.samples
        if args.jet_order is not None:
            overrides["jet_order"] = args.jet_order
        if args.threads != 1:
            overrides["threads"] = args.threads
        if args.check:
            overrides["checks"] = args.check
        if args.lam is not None:
            overrides["lambda"] = args.lam if args.lam == "fit" else float(args.lam)
        report = run_checks(scene, overrides)
        sys.stdout.write(report.to_text())
        if args.json:
            with open(args.json, "w") as f:
                f.write(report.to_json())
        return exit_code(report)
    except FileNotFoundError as e:
        print(f"scene error: {e}", file=sys.stderr)
        return 2
    except (SchemaError, ExprSyntaxError, UnknownIdentifierError, UnknownSceneError) as e:
        print(f"scene error: {e}", file=sys.stderr)
        return 2
    except RmapError as e:
        print(f"numeric error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
