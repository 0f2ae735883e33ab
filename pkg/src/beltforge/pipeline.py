"""Pipeline stages: belt fit, planning, correction, augmentation, training,
rollout, and evaluation, all persisting through the artifact store."""

import csv
import time

import numpy as np

from .artifacts import ArtifactStore, RunManifest, append_run_log
from .belt import BeltParams, fit_params, read_force_samples_csv
from .config import PipelineConfig, stage_seed
from .demos import CorrectedPath, extract_correction, make_virtual, synthesize_correction
from .errors import StageDependencyError
from .planner import Path, PlanProblem, plan, evaluate_constraints
from .policy import (DemonstrationDataset, Policy, build_dataset, evaluate,
                     mean_reference_path, rollout_trajectory, train)


def _timed(store, stage):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            append_run_log(store, stage, time.perf_counter() - self.t0)
            return False
    return _Ctx()


def stage_fit_belt(cfg: PipelineConfig, store: ArtifactStore) -> str:
    """Belt parameters from samples (or passed through from the config)."""
    with _timed(store, "fit-belt"):
        if cfg.belt_samples_file is not None:
            samples = read_force_samples_csv(cfg.belt_samples_file)
            params, report = fit_params(samples, cfg.belt_initial_guess)
            payload = {"kind": "belt_params", "params": params.to_payload(),
                       "fit": report.to_payload()}
        else:
            params = cfg.belt_params
            payload = {"kind": "belt_params", "params": params.to_payload(),
                       "fit": None}
        return store.save("belt_params", payload)


def _load_belt(store, belt_id) -> BeltParams:
    return BeltParams.from_payload(store.load(belt_id)["params"])


def _load_path(store, path_id) -> Path:
    payload = store.load(path_id)
    if payload.get("kind") != "path":
        raise StageDependencyError(f"artifact {path_id} is not a path")
    return Path.from_payload(payload)


def stage_plan(cfg: PipelineConfig, store: ArtifactStore, belt_id: str):
    """Plan the offline path; emits the path and a solve report artifact."""
    with _timed(store, "plan"):
        belt = _load_belt(store, belt_id)
        problem = PlanProblem(robot=cfg.robot, scene=cfg.scene, belt=belt,
                              bounds=cfg.bounds, q_start=cfg.q_start,
                              q_goal=cfg.q_goal, T=cfg.T, dt=cfg.dt)
        path, report = plan(problem, cfg.solver)
        path_id = store.save("path", path.to_payload())
        seed_q = cfg.q_start[None, :] + np.linspace(0, 1, cfg.T + 1)[:, None] \
            * (cfg.q_goal - cfg.q_start)
        matches_seed = bool(np.max(np.abs(path.joint_waypoints - seed_q)) < 1e-6)
        report_payload = report.to_payload()
        report_payload.update({"kind": "solve_report", "path_id": path_id,
                               "belt_id": belt_id,
                               "matches_linear_seed": matches_seed})
        report_id = store.save("solve_report", report_payload)
        return path_id, report_id


def stage_correct_synth(cfg: PipelineConfig, store: ArtifactStore, path_id: str):
    """Apply the configured scripted correction scenarios to a planned path."""
    with _timed(store, "correct-synth"):
        path = _load_path(store, path_id)
        ids = []
        for i, scenario in enumerate(cfg.corrections):
            corrected = synthesize_correction(
                path, scenario, seed=stage_seed(cfg.master_seed, f"correct:{i}"))
            corrected.base_id = path_id
            ids.append(store.save("corrected_path", corrected.to_payload()))
        return ids


def stage_augment(cfg: PipelineConfig, store: ArtifactStore, path_id: str):
    """Virtual demonstrations from every stored correction of this path."""
    with _timed(store, "augment"):
        path = _load_path(store, path_id)
        correction_ids = store.find_corrections(path_id)
        if not correction_ids:
            raise StageDependencyError(
                f"no corrections stored for path {path_id}; run correct-synth "
                f"or submit corrections through the service first")
        virtual_ids = []
        for i, cid in enumerate(sorted(correction_ids)):
            corrected = CorrectedPath.from_payload(store.load(cid))
            delta = extract_correction(path, corrected)
            for j in range(cfg.per_correction):
                virtual = make_virtual(
                    path, delta, degree=cfg.degree, jitter=cfg.jitter,
                    seed=stage_seed(cfg.master_seed, f"augment:{i}:{j}"))
                virtual.base_id = path_id
                virtual_ids.append(store.save("corrected_path", virtual.to_payload()))
        return virtual_ids


def _demo_paths(store, path_id, provenances):
    ids = sorted(store.find_corrections(path_id, provenances))
    return ids, [CorrectedPath.from_payload(store.load(i)) for i in ids]


def stage_train(cfg: PipelineConfig, store: ArtifactStore, path_id: str):
    """Dataset from all demos of the path, then behavior-cloning training."""
    with _timed(store, "train"):
        ids, demos = _demo_paths(store, path_id,
                                 ("human", "synthetic", "virtual"))
        if not demos:
            raise StageDependencyError(f"no demonstrations for path {path_id}")
        dataset = build_dataset(demos, cfg.pulley_center)
        ds_payload = dataset.to_payload()
        ds_payload["sources"] = ids
        ds_payload["path_id"] = path_id
        dataset_id = store.save("dataset", ds_payload)
        policy, trace = train(dataset, cfg.hyperparams,
                              seed=stage_seed(cfg.master_seed, "train"))
        payload = policy.to_payload()
        payload["dataset_id"] = dataset_id
        payload["path_id"] = path_id
        payload["loss_trace"] = trace
        policy_id = store.save("policy", payload)
        return dataset_id, policy_id


def _load_policy(store, policy_id):
    payload = store.load(policy_id)
    if payload.get("kind") != "policy":
        raise StageDependencyError(f"artifact {policy_id} is not a policy")
    return Policy.from_payload(payload), payload


def stage_rollout(cfg: PipelineConfig, store: ArtifactStore, policy_id: str):
    """Learned reference path: roll the policy out from the offline start."""
    with _timed(store, "rollout"):
        policy, payload = _load_policy(store, policy_id)
        base = _load_path(store, payload["path_id"])
        traj = rollout_trajectory(policy, base.poses[0], cfg.pulley_center,
                                  count=cfg.rollout_steps, dt=cfg.dt)
        out = traj.to_payload()
        out["kind"] = "learned_path"
        out["policy_id"] = policy_id
        return store.save("learned_path", out)


def stage_eval(cfg: PipelineConfig, store: ArtifactStore, learned_id: str):
    """Compare the learned path against the stored demonstrations."""
    with _timed(store, "eval"):
        learned_payload = store.load(learned_id)
        learned = Path.from_payload(learned_payload)
        policy_id = learned_payload.get("policy_id")
        _, policy_payload = _load_policy(store, policy_id)
        path_id = policy_payload["path_id"]
        ref_ids, refs = _demo_paths(store, path_id, ("human", "synthetic"))
        all_ids, all_demos = _demo_paths(store, path_id,
                                         ("human", "synthetic", "virtual"))
        metrics = evaluate(learned, refs)
        mean_path = mean_reference_path(all_demos)
        vs_mean = evaluate(learned, [mean_path])
        payload = {"kind": "eval_report",
                   "learned_id": learned_id,
                   "reference_ids": ref_ids,
                   "metrics": metrics.to_payload(),
                   "mean_rmse_vs_mean_path": vs_mean.mean_rmse}
        report_id = store.save("eval_report", payload)
        csv_name = f"eval_report-{report_id}.csv"
        with open(store.root / csv_name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["reference_id", "rmse_m"])
            for rid, rmse in zip(ref_ids, metrics.rmse_per_reference):
                writer.writerow([rid, repr(rmse)])
            writer.writerow(["mean", repr(metrics.mean_rmse)])
            writer.writerow(["vs_mean_path", repr(vs_mean.mean_rmse)])
        return report_id, csv_name


def run_pipeline(cfg: PipelineConfig, store: ArtifactStore) -> RunManifest:
    """All stages chained headlessly with scripted corrections."""
    manifest = RunManifest(store, config_snapshot=cfg.raw,
                           master_seed=cfg.master_seed)
    belt_id = stage_fit_belt(cfg, store)
    manifest.add_stage("fit-belt", {"belt_params": belt_id})
    path_id, report_id = stage_plan(cfg, store, belt_id)
    manifest.add_stage("plan", {"path": path_id, "solve_report": report_id})
    corr_ids = stage_correct_synth(cfg, store, path_id)
    manifest.add_stage("correct-synth",
                       {f"correction_{i}": cid for i, cid in enumerate(corr_ids)})
    virt_ids = stage_augment(cfg, store, path_id)
    manifest.add_stage("augment",
                       {f"virtual_{i}": vid for i, vid in enumerate(virt_ids)})
    dataset_id, policy_id = stage_train(cfg, store, path_id)
    manifest.add_stage("train", {"dataset": dataset_id, "policy": policy_id})
    learned_id = stage_rollout(cfg, store, policy_id)
    manifest.add_stage("rollout", {"learned_path": learned_id})
    eval_id, csv_name = stage_eval(cfg, store, learned_id)
    manifest.add_stage("eval", {"eval_report": eval_id}, extra_files=[csv_name])
    manifest.write()
    return manifest
