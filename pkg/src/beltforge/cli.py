"""Command-line interface: pipeline stages, full runs, and the service."""

import argparse
import json
import os
import sys
from pathlib import Path as FsPath

from .artifacts import ArtifactStore, RunManifest
from .config import default_config_path, load_config
from .errors import BeltforgeError
from . import pipeline as stages


def _parser():
    p = argparse.ArgumentParser(
        prog="beltforge",
        description="Belt-assembly reference-trajectory pipeline")
    p.add_argument("command",
                   choices=["fit-belt", "plan", "correct-synth", "augment",
                            "train", "rollout", "eval", "pipeline", "serve"])
    p.add_argument("--config", default=None,
                   help="pipeline config JSON (default: packaged config)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed override")
    p.add_argument("--out", default=None,
                   help="artifact directory (default: $BELTFORGE_OUT or ./beltforge_out)")
    p.add_argument("--id", default=None,
                   help="upstream artifact id consumed by the stage")
    p.add_argument("--port", type=int, default=8722, help="service port")
    return p


def _out_dir(args):
    return FsPath(args.out or os.environ.get("BELTFORGE_OUT", "beltforge_out"))


def _require_id(args, what):
    if not args.id:
        raise BeltforgeError(f"--id required: {what}")
    return args.id


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config or default_config_path(), args.seed)
        store = ArtifactStore(_out_dir(args))
        manifest = RunManifest.load_or_new(store, config_snapshot=cfg.raw,
                                           master_seed=cfg.master_seed)
        if args.command == "fit-belt":
            belt_id = stages.stage_fit_belt(cfg, store)
            manifest.add_stage("fit-belt", {"belt_params": belt_id})
            manifest.write()
            print(json.dumps({"belt_params": belt_id}))
        elif args.command == "plan":
            belt_id = args.id or stages.stage_fit_belt(cfg, store)
            path_id, report_id = stages.stage_plan(cfg, store, belt_id)
            manifest.add_stage("plan", {"path": path_id,
                                        "solve_report": report_id})
            manifest.write()
            report = store.load(report_id)
            print(json.dumps({"path": path_id, "solve_report": report_id,
                              "matches_linear_seed": report["matches_linear_seed"],
                              "max_violation": report["max_violation"]}))
        elif args.command == "correct-synth":
            path_id = _require_id(args, "the planned path to correct")
            ids = stages.stage_correct_synth(cfg, store, path_id)
            manifest.add_stage("correct-synth",
                               {f"correction_{i}": c for i, c in enumerate(ids)})
            manifest.write()
            print(json.dumps({"corrections": ids}))
        elif args.command == "augment":
            path_id = _require_id(args, "the planned path to augment")
            ids = stages.stage_augment(cfg, store, path_id)
            manifest.add_stage("augment",
                               {f"virtual_{i}": v for i, v in enumerate(ids)})
            manifest.write()
            print(json.dumps({"virtual": ids}))
        elif args.command == "train":
            path_id = _require_id(args, "the planned path whose demos to train on")
            dataset_id, policy_id = stages.stage_train(cfg, store, path_id)
            manifest.add_stage("train", {"dataset": dataset_id,
                                         "policy": policy_id})
            manifest.write()
            print(json.dumps({"dataset": dataset_id, "policy": policy_id}))
        elif args.command == "rollout":
            policy_id = _require_id(args, "the trained policy to roll out")
            learned_id = stages.stage_rollout(cfg, store, policy_id)
            manifest.add_stage("rollout", {"learned_path": learned_id})
            manifest.write()
            print(json.dumps({"learned_path": learned_id}))
        elif args.command == "eval":
            learned_id = _require_id(args, "the learned path to evaluate")
            report_id, csv_name = stages.stage_eval(cfg, store, learned_id)
            manifest.add_stage("eval", {"eval_report": report_id},
                               extra_files=[csv_name])
            manifest.write()
            report = store.load(report_id)
            print(json.dumps({"eval_report": report_id, "csv": csv_name,
                              "mean_rmse": report["metrics"]["mean_rmse"]}))
        elif args.command == "pipeline":
            manifest = stages.run_pipeline(cfg, store)
            last = manifest.data["stages"][-1]
            report = store.load(last["artifacts"]["eval_report"])
            print(json.dumps({"manifest": str(store.root / "manifest.json"),
                              "stages": len(manifest.data["stages"]),
                              "mean_rmse": report["metrics"]["mean_rmse"],
                              "mean_rmse_vs_mean_path":
                                  report["mean_rmse_vs_mean_path"]}))
        elif args.command == "serve":
            from .service import serve

            static = os.environ.get("BELTFORGE_STUDIO_DIST")
            serve(store.root, scene_payload=cfg.scene.to_payload(),
                  port=args.port, static_dir=static)
    except BeltforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
