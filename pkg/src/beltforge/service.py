"""Local HTTP service exposing paths and accepting human corrections.

The correction studio (or any client) reads planned paths and the scene,
and POSTs corrected paths back; accepted corrections are persisted with
provenance "human" and feed the augmentation stage exactly like scripted
ones. Validation failures return 422 with a machine-readable reason code.
"""

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import SCHEMA, backend_name
from .artifacts import ArtifactStore
from .demos import CorrectedPath, extract_correction
from .errors import StageDependencyError
from .planner import Path
from .robot import Pose

# Reason codes surfaced on 422 responses; the studio's client-side
# validation mirrors these exactly.
REASON_BAD_SCHEMA = "bad_schema"
REASON_LENGTH_MISMATCH = "length_mismatch"
REASON_NON_FINITE = "non_finite"
REASON_ENDPOINT_MOVED = "endpoint_moved"


def _reject(status, reason, detail):
    return JSONResponse(status_code=status,
                        content={"reason": reason, "detail": detail})


def validate_correction_payload(body, base_payload):
    """Structural validation shared by service tests and the studio contract.

    Returns (None, poses) when valid, else ((reason, detail), None).
    """
    if not isinstance(body, dict) or not isinstance(body.get("waypoints"), list):
        return (REASON_BAD_SCHEMA, "body must carry a waypoints list"), None
    waypoints = body["waypoints"]
    base_wps = base_payload["waypoints"]
    if len(waypoints) != len(base_wps):
        return (REASON_LENGTH_MISMATCH,
                f"expected {len(base_wps)} waypoints, got {len(waypoints)}"), None
    poses = []
    for i, wp in enumerate(waypoints):
        pose = wp.get("pose") if isinstance(wp, dict) else None
        if not isinstance(pose, dict):
            return (REASON_BAD_SCHEMA, f"waypoint {i} lacks a pose"), None
        xyz = pose.get("xyz")
        rpy = pose.get("rpy")
        if (not isinstance(xyz, list) or len(xyz) != 3
                or not isinstance(rpy, list) or len(rpy) != 3):
            return (REASON_BAD_SCHEMA,
                    f"waypoint {i} pose needs xyz[3] and rpy[3]"), None
        values = [*xyz, *rpy]
        if not all(isinstance(v, (int, float)) and np.isfinite(v) for v in values):
            return (REASON_NON_FINITE, f"waypoint {i} has non-finite entries"), None
        poses.append(pose)
    for idx in (0, len(base_wps) - 1):
        base_pose = base_wps[idx]["pose"]
        if (poses[idx]["xyz"] != base_pose["xyz"]
                or poses[idx]["rpy"] != base_pose["rpy"]):
            return (REASON_ENDPOINT_MOVED,
                    f"waypoint {idx} is task-fixed and must not move"), None
    return None, poses


def create_app(store: ArtifactStore, scene_payload=None) -> FastAPI:
    app = FastAPI(title="beltforge correction service")

    @app.get("/api/status")
    def status():
        return {"status": "ok", "schema": SCHEMA, "backend": backend_name(),
                "artifacts": len(store.list_ids())}

    @app.get("/api/scene")
    def scene():
        if scene_payload is None:
            return _reject(404, "no_scene", "service started without a scene")
        return {"schema": SCHEMA, "kind": "scene", **scene_payload}

    @app.get("/api/paths")
    def list_paths():
        paths = []
        for kind, digest in store.list_ids("path"):
            payload = store.load(digest)
            paths.append({"id": digest, "waypoints": len(payload["waypoints"]),
                          "dt": payload["dt"]})
        return {"paths": paths}

    @app.get("/api/paths/{path_id}")
    def get_path(path_id: str):
        try:
            payload = store.load(path_id)
        except StageDependencyError:
            return _reject(404, "unknown_path", f"no artifact {path_id}")
        if payload.get("kind") != "path":
            return _reject(404, "unknown_path", f"{path_id} is not a path")
        return {"id": path_id, **payload}

    @app.get("/api/paths/{path_id}/corrections")
    def list_corrections(path_id: str):
        try:
            store.load(path_id)
        except StageDependencyError:
            return _reject(404, "unknown_path", f"no artifact {path_id}")
        ids = store.find_corrections(path_id, ("human", "synthetic", "virtual"))
        return {"corrections": sorted(ids)}

    @app.post("/api/paths/{path_id}/corrections")
    async def post_correction(path_id: str, request: Request):
        try:
            base_payload = store.load(path_id)
        except StageDependencyError:
            return _reject(404, "unknown_path", f"no artifact {path_id}")
        if base_payload.get("kind") != "path":
            return _reject(404, "unknown_path", f"{path_id} is not a path")
        try:
            body = await request.json()
        except Exception:
            return _reject(422, REASON_BAD_SCHEMA, "body is not valid JSON")
        error, poses = validate_correction_payload(body, base_payload)
        if error:
            return _reject(422, error[0], error[1])
        base = Path.from_payload(base_payload)
        corrected_poses = [Pose.from_payload(p) for p in poses]
        as_path = Path(poses=corrected_poses, dt=base.dt)
        delta = extract_correction(base, as_path)
        corrected = CorrectedPath(poses=corrected_poses, dt=base.dt,
                                  provenance="human", delta=delta,
                                  base_id=path_id)
        digest = store.save("corrected_path", corrected.to_payload())
        return {"id": digest, "provenance": "human", "base_id": path_id}

    return app


def serve(store_root, scene_payload=None, host="127.0.0.1", port=8722,
          static_dir=None):
    """Run the service with uvicorn; mounts the studio build when present."""
    import uvicorn

    app = create_app(ArtifactStore(store_root), scene_payload)
    if static_dir is not None:
        from pathlib import Path as _P

        if _P(static_dir).is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                      name="studio")
    uvicorn.run(app, host=host, port=port, log_level="warning")
