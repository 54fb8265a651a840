"""Command-line driver: build-assets | simulate | render | selftest | make-scene.

Exit codes: 0 success, 2 config error, 3 simulation infeasible, 4 render I/O
error. Logs go to stderr as JSON lines; artifacts only to the output dir.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .errors import CollisionDetected, ConfigError, NoCandidate, NoValidPlacement, SceneCompError


def _log(event: str, **fields):
    rec = {"ts": round(time.time(), 3), "event": event}
    rec.update(fields)
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.workers is not None:
        out["workers"] = args.workers
    if args.out is not None:
        out["out_dir"] = args.out
    if getattr(args, "duration", None) is not None:
        out["duration_s"] = args.duration
    if getattr(args, "actors", None) is not None:
        out["n_actors"] = args.actors
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scenecomp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="scenario config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory override")

    p_sim = sub.add_parser("simulate", help="sample placements and roll trajectories")
    add_common(p_sim)
    p_sim.add_argument("--duration", type=float, default=None)
    p_sim.add_argument("--actors", type=int, default=None)

    p_ren = sub.add_parser("render", help="render composited frames from a trajectory")
    add_common(p_ren)
    p_ren.add_argument("--trajectory", default=None, help="trajectory JSONL (default: <out>/trajectory.jsonl)")

    p_bld = sub.add_parser("build-assets", help="fit meshes from observation bundles")
    p_bld.add_argument("--observations", required=True)
    p_bld.add_argument("--bank", required=True)
    p_bld.add_argument("--iterations", type=int, default=150)

    p_scn = sub.add_parser("make-scene", help="generate a synthetic scenario bundle")
    p_scn.add_argument("--out", required=True)
    p_scn.add_argument("--frames", type=int, default=50)
    p_scn.add_argument("--width", type=int, default=256)
    p_scn.add_argument("--height", type=int, default=192)
    p_scn.add_argument("--assets", type=int, default=2)
    p_scn.add_argument("--static-camera", action="store_true")

    sub.add_parser("selftest", help="run the embedded oracle checks")

    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            from .pipeline import cmd_selftest

            rows, ok = cmd_selftest()
            width = max(len(r["check"]) for r in rows)
            for r in rows:
                status = "PASS" if r["passed"] else "FAIL"
                print(f"{r['check']:<{width}}  measured {r['measured']:.3e}  tol {r['tolerance']:.3e}  {status}")
            print(f"{'all checks passed' if ok else 'SELFTEST FAILED'}")
            return 0 if ok else 1

        if args.command == "make-scene":
            from .synthetic import make_scene_bundle

            make_scene_bundle(
                args.out,
                n_frames=args.frames,
                width=args.width,
                height=args.height,
                n_assets=args.assets,
                static_camera=args.static_camera,
            )
            _log("scene_created", out=args.out, frames=args.frames)
            return 0

        if args.command == "build-assets":
            from .pipeline import cmd_build_assets
            from .fitting import FitConfig

            report = cmd_build_assets(args.observations, args.bank, FitConfig(iterations=args.iterations))
            _log("assets_built", built=len(report["built"]), failures=len(report["failures"]))
            return 0

        if args.command == "simulate":
            from .pipeline import cmd_simulate, load_config

            cfg = load_config(args.config, _overrides(args))
            path = cmd_simulate(cfg)
            _log("simulated", trajectory=path, actors=cfg.n_actors, seed=cfg.seed)
            return 0

        if args.command == "render":
            from .pipeline import cmd_render, load_config
            import os

            cfg = load_config(args.config, _overrides(args))
            traj = args.trajectory or os.path.join(cfg.out_dir, "trajectory.jsonl")
            if not os.path.isfile(traj):
                raise ConfigError(f"trajectory file missing: {traj}")
            try:
                rec_path = cmd_render(cfg, traj)
            except (OSError, ValueError) as exc:
                _log("render_io_error", error=str(exc))
                return 4
            _log("rendered", records=rec_path)
            return 0
    except ConfigError as exc:
        _log("config_error", error=str(exc))
        return 2
    except (NoValidPlacement, NoCandidate, CollisionDetected) as exc:
        _log("simulation_infeasible", error=str(exc))
        return 3
    except SceneCompError as exc:
        _log("error", error=str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
