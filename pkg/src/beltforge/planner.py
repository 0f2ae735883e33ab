"""Sequential convex optimization over joint-space waypoint paths.

Minimizes squared joint-space path length subject to collision clearance and
a belt-force band, via l1 exact-penalty trust-region iterations: constraints
are linearized about the current path, the convex subproblem (quadratic
objective + hinge penalties, box trust region) is solved by coordinate
descent, and steps are accepted on a true-vs-model merit-improvement ratio.
Start and goal waypoints are eliminated by substitution, so endpoints are
met exactly.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .belt import BeltParams, ForceBounds
from .errors import DomainError, InfeasiblePlanError
from .kernels import collision_batch, csc_from_dense, ee_batch, qp_hinge_cd
from .robot import Pose, RobotDescription, pose_from_transform
from .scene import Scene


@dataclass
class SolverOptions:
    ctol: float = 1e-4
    trust_init: float = 0.1
    trust_shrink: float = 0.5
    trust_expand: float = 1.5
    trust_max: float = 0.5
    min_trust: float = 1e-5
    penalty_init: float = 10.0
    penalty_scale: float = 10.0
    max_penalty_escalations: int = 5
    max_convexify_iterations: int = 40
    accept_ratio: float = 0.25
    min_model_improve: float = 1e-7
    collision_activation: float = 0.05
    # Interior per-segment collision samples; a fixed grid keeps the
    # linearized model and the merit consistent across iterates. The
    # refinement loop densifies this set wherever a finer post-check still
    # finds penetration between samples.
    collision_interior_samples: int = 5
    collision_check_factor: int = 4
    max_refinements: int = 6
    qp_max_sweeps: int = 250
    qp_tol: float = 1e-9
    hinge_smoothing: float = 1e-7

    def to_payload(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_payload(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PlanProblem:
    robot: RobotDescription
    scene: Scene
    belt: BeltParams
    bounds: ForceBounds
    q_start: np.ndarray
    q_goal: np.ndarray
    T: int                      # waypoint count minus one; path has T+1 poses
    dt: float
    pinned: dict = None         # interior waypoint index -> fixed JointConfig

    def __post_init__(self):
        if self.T < 3:
            raise DomainError(f"need T >= 3, got {self.T}")
        if self.dt <= 0:
            raise DomainError(f"need dt > 0, got {self.dt}")
        self.q_start = self.robot.check_config(self.q_start, "q_start")
        self.q_goal = self.robot.check_config(self.q_goal, "q_goal")
        pinned = {}
        for idx, qv in (self.pinned or {}).items():
            if not (0 < idx < self.T):
                raise DomainError(f"pinned waypoint {idx} not interior")
            pinned[int(idx)] = self.robot.check_config(qv, f"pinned[{idx}]")
        self.pinned = pinned


@dataclass
class Path:
    """Waypoint path: poses always, joint waypoints when planner-produced."""

    poses: list
    dt: float
    joint_waypoints: np.ndarray = None  # (T+1, 6) or None for pose-only paths

    def __post_init__(self):
        if self.joint_waypoints is not None:
            self.joint_waypoints = np.asarray(self.joint_waypoints, dtype=np.float64)
            if self.joint_waypoints.shape != (len(self.poses), 6):
                raise DomainError("joint waypoint count must match pose count")
        if self.dt <= 0:
            raise DomainError("path dt must be > 0")

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.poses])

    def pose_matrix(self) -> np.ndarray:
        return np.array([p.to_vector() for p in self.poses])

    def to_payload(self):
        wps = []
        for i, pose in enumerate(self.poses):
            wp = {"pose": pose.to_payload()}
            if self.joint_waypoints is not None:
                wp["q"] = [float(v) for v in self.joint_waypoints[i]]
            wps.append(wp)
        return {"kind": "path", "dt": float(self.dt), "waypoints": wps}

    @classmethod
    def from_payload(cls, d):
        poses = [Pose.from_payload(wp["pose"]) for wp in d["waypoints"]]
        joints = None
        if d["waypoints"] and "q" in d["waypoints"][0]:
            joints = np.array([wp["q"] for wp in d["waypoints"]], dtype=np.float64)
        return cls(poses=poses, dt=d["dt"], joint_waypoints=joints)


def path_from_joints(robot: RobotDescription, qpath, dt: float) -> Path:
    qpath = np.asarray(qpath, dtype=np.float64)
    ee, _ = ee_batch(robot.dh, qpath)
    poses = [pose_from_transform(ee[t]) for t in range(qpath.shape[0])]
    return Path(poses=poses, dt=dt, joint_waypoints=qpath)


@dataclass
class StepRecord:
    iteration: int
    penalty: float
    trust_radius: float
    merit: float
    accepted: bool
    refinement: int = 0  # sample-refinement round the step belongs to


@dataclass
class SolveReport:
    iterations: int
    final_merit: float
    max_violation: float
    converged: bool
    steps: list = field(default_factory=list)

    @property
    def penalty_trace(self):
        return [s.penalty for s in self.steps]

    @property
    def trust_trace(self):
        return [s.trust_radius for s in self.steps]

    def to_payload(self):
        return {
            "iterations": self.iterations,
            "final_merit": self.final_merit,
            "max_violation": self.max_violation,
            "converged": self.converged,
            "steps": [dataclasses.asdict(s) for s in self.steps],
        }


@dataclass
class WaypointConstraints:
    signed_distance: float
    collision_violation: float
    displacement: float
    displacement_rate: float
    belt_force: float
    force_lower_violation: float
    force_upper_violation: float

    @property
    def max_violation(self):
        return max(self.collision_violation, self.force_lower_violation,
                   self.force_upper_violation)


@dataclass
class ConstraintReport:
    waypoints: list

    @property
    def max_violation(self):
        return max(w.max_violation for w in self.waypoints)

    def to_payload(self):
        return {"waypoints": [dataclasses.asdict(w) for w in self.waypoints],
                "max_violation": self.max_violation}


def _belt_state(problem: PlanProblem, ee_pos):
    """Per-waypoint signed stretch, displacement, rate, force, radial unit."""
    rel = ee_pos - problem.scene.belt_anchor[None, :]
    reach = np.linalg.norm(rel, axis=1)
    unit = np.zeros_like(rel)
    ok = reach > 1e-12
    unit[ok] = rel[ok] / reach[ok, None]
    s = reach - problem.belt.rest_length
    x = np.maximum(s, 0.0)
    rate = np.zeros_like(x)
    rate[1:] = (x[1:] - x[:-1]) / problem.dt
    xb = x ** problem.belt.beta
    force = problem.belt.k * xb + problem.belt.lam * xb * rate
    force = np.maximum(force, 0.0)
    return s, x, rate, force, unit


def evaluate_constraints(problem: PlanProblem, path: Path) -> ConstraintReport:
    """Exact (non-linearized) constraint values at every waypoint."""
    if path.joint_waypoints is None:
        raise DomainError("constraint evaluation needs joint waypoints")
    qpath = path.joint_waypoints
    ee, _ = ee_batch(problem.robot.dh, qpath)
    ee_pos = ee[:, :3, 3]
    _, x, rate, force, _ = _belt_state(problem, ee_pos)
    margin = problem.scene.safety_margin
    if problem.scene.obstacles:
        sd, _, _, _ = collision_batch(
            problem.robot.dh, qpath, problem.robot._sph_frame,
            problem.robot._sph_local, problem.robot._sph_radius,
            problem.scene._obs_kind, problem.scene._obs_data)
        sd_min = sd.reshape(sd.shape[0], -1).min(axis=1)
    else:
        sd_min = np.full(qpath.shape[0], np.inf)
    rows = []
    for t in range(qpath.shape[0]):
        rows.append(WaypointConstraints(
            signed_distance=float(sd_min[t]),
            collision_violation=float(max(0.0, margin - sd_min[t])),
            displacement=float(x[t]),
            displacement_rate=float(rate[t]),
            belt_force=float(force[t]),
            force_lower_violation=float(max(0.0, problem.bounds.f_lower - force[t])),
            force_upper_violation=float(max(0.0, force[t] - problem.bounds.f_upper)),
        ))
    return ConstraintReport(waypoints=rows)


class _Subproblem:
    """Linearized constraint rows + quadratic objective over the free variables."""

    def __init__(self, problem: PlanProblem, options: SolverOptions):
        self.problem = problem
        self.options = options
        self.T = problem.T
        self.free_ts = [t for t in range(1, self.T)
                        if t not in problem.pinned]
        self.pos_of = {t: i for i, t in enumerate(self.free_ts)}
        self.n = len(self.free_ts) * 6
        self.extra_samples = []  # refinement (segment, alpha) additions
        self._build_quadratic()

    def _build_quadratic(self):
        P = np.zeros((self.n, self.n))
        c = np.zeros(self.n)
        self._fixed_terms = []  # (t, t+1) pairs with at least one fixed end
        for t in range(self.T):
            fi = self.pos_of.get(t)
            fj = self.pos_of.get(t + 1)
            for k in range(6):
                if fi is not None:
                    P[fi * 6 + k, fi * 6 + k] += 2.0
                if fj is not None:
                    P[fj * 6 + k, fj * 6 + k] += 2.0
                if fi is not None and fj is not None:
                    P[fi * 6 + k, fj * 6 + k] -= 2.0
                    P[fj * 6 + k, fi * 6 + k] -= 2.0
        self.P = P
        self.P_csc = csc_from_dense(P)
        self.P_diag = np.diag(P).copy()

    def flatten(self, qpath):
        return qpath[self.free_ts].reshape(-1).copy()

    def unflatten(self, x, qpath_template):
        q = qpath_template.copy()
        q[self.free_ts] = x.reshape(len(self.free_ts), 6)
        return q

    def quad_terms(self, qpath):
        """c vector (linear objective terms from fixed neighbors) for this path."""
        c = np.zeros(self.n)
        fixed = {0: self.problem.q_start, self.T: self.problem.q_goal,
                 **self.problem.pinned}
        for t in range(self.T):
            fi = self.pos_of.get(t)
            fj = self.pos_of.get(t + 1)
            if fi is None and fj is not None:
                qv = fixed[t]
                for k in range(6):
                    c[fj * 6 + k] -= 2.0 * qv[k]
            elif fj is None and fi is not None:
                qv = fixed[t + 1]
                for k in range(6):
                    c[fi * 6 + k] -= 2.0 * qv[k]
        return c

    def objective(self, qpath):
        d = np.diff(qpath, axis=0)
        return float(np.sum(d * d))

    def box(self, x0, trust):
        lower = np.empty(self.n)
        upper = np.empty(self.n)
        jl = self.problem.robot.joint_lower
        ju = self.problem.robot.joint_upper
        for i, t in enumerate(self.free_ts):
            lower[i * 6:(i + 1) * 6] = np.maximum(x0[i * 6:(i + 1) * 6] - trust, jl)
            upper[i * 6:(i + 1) * 6] = np.minimum(x0[i * 6:(i + 1) * 6] + trust, ju)
        return lower, upper

    # -- collision sample set ---------------------------------------------

    def sample_set(self, qpath):
        """Configs to enforce collision margins at: waypoints, a fixed
        interior alpha grid per segment, and any refinement extras.

        Returns (configs, t_lo, t_hi, alpha); sample = (1-alpha) q[t_lo]
        + alpha q[t_hi]. Waypoints carry alpha 0 with t_lo == t_hi.
        """
        tn = qpath.shape[0]
        k = max(0, self.options.collision_interior_samples)
        configs = [qpath]
        t_lo = [np.arange(tn)]
        t_hi = [np.arange(tn)]
        alpha = [np.zeros(tn)]
        for j in range(k):
            a = (j + 1) / (k + 1)
            configs.append((1.0 - a) * qpath[:-1] + a * qpath[1:])
            t_lo.append(np.arange(tn - 1))
            t_hi.append(np.arange(1, tn))
            alpha.append(np.full(tn - 1, a))
        for (t, a) in self.extra_samples:
            configs.append(((1.0 - a) * qpath[t] + a * qpath[t + 1])[None, :])
            t_lo.append(np.array([t]))
            t_hi.append(np.array([t + 1]))
            alpha.append(np.array([a]))
        return (np.ascontiguousarray(np.concatenate(configs)),
                np.concatenate(t_lo), np.concatenate(t_hi),
                np.concatenate(alpha))

    def _collision_sd(self, configs, with_grads=False):
        problem = self.problem
        sd, normals, jacs, _ = collision_batch(
            problem.robot.dh, configs, problem.robot._sph_frame,
            problem.robot._sph_local, problem.robot._sph_radius,
            problem.scene._obs_kind, problem.scene._obs_data)
        if with_grads:
            return sd, normals, jacs
        return sd

    def dense_violations(self, qpath):
        """Fine-grid penetration check between enforced samples.

        Returns (max_violation, offenders) where offenders is one
        (segment, alpha) per violating segment, at its deepest point.
        """
        tn = qpath.shape[0]
        k = max(1, (self.options.collision_interior_samples + 1)
                * self.options.collision_check_factor - 1)
        alphas = np.arange(1, k + 1) / (k + 1)
        interior = ((1.0 - alphas)[None, :, None] * qpath[:-1, None, :]
                    + alphas[None, :, None] * qpath[1:, None, :])
        sd = self._collision_sd(np.ascontiguousarray(interior.reshape(-1, 6)))
        sd_min = sd.reshape(tn - 1, k, -1).min(axis=2)   # (T, k)
        margin = self.problem.scene.safety_margin
        worst = 0.0
        offenders = []
        for t in range(tn - 1):
            j = int(np.argmin(sd_min[t]))
            viol = margin - sd_min[t, j]
            if viol > worst:
                worst = viol
            if viol > self.options.ctol:
                offenders.append((t, float(alphas[j])))
        return worst, offenders

    # -- linearization --------------------------------------------------

    def linearize(self, qpath):
        """Constraint rows A x + b (hinge-penalized) about qpath.

        Also returns the exact penalty term at qpath (all-pair collision
        hinge sum over the sample set plus the force hinge sum).
        """
        problem = self.problem
        margin = problem.scene.safety_margin
        rows_a = []
        rows_b = []
        ee, jac = ee_batch(problem.robot.dh, qpath)
        ee_pos = np.ascontiguousarray(ee[:, :3, 3])
        s, x, rate, force, unit = _belt_state(problem, ee_pos)
        coll_hinge_sum = 0.0
        if problem.scene.obstacles:
            configs, t_lo, t_hi, alpha = self.sample_set(qpath)
            sd, normals, sjac = self._collision_sd(configs, with_grads=True)
            coll_hinge_sum = float(np.sum(np.maximum(0.0, margin - sd)))
            act = margin + self.options.collision_activation
            for i in range(configs.shape[0]):
                lo_t, hi_t, a_frac = int(t_lo[i]), int(t_hi[i]), float(alpha[i])
                f_lo = self.pos_of.get(lo_t)
                f_hi = self.pos_of.get(hi_t) if hi_t != lo_t else None
                w_lo = 1.0 - a_frac
                w_hi = a_frac
                if (f_lo is None or w_lo == 0.0) and (f_hi is None or w_hi == 0.0):
                    continue
                for sph in range(sd.shape[1]):
                    for obs in range(sd.shape[2]):
                        if sd[i, sph, obs] >= act:
                            continue
                        grad = -(normals[i, sph, obs] @ sjac[i, sph])
                        a = np.zeros(self.n)
                        b = margin - sd[i, sph, obs]
                        if f_lo is not None and w_lo != 0.0:
                            a[f_lo * 6:(f_lo + 1) * 6] += w_lo * grad
                            b -= w_lo * grad @ qpath[lo_t]
                        if f_hi is not None and w_hi != 0.0:
                            a[f_hi * 6:(f_hi + 1) * 6] += w_hi * grad
                            b -= w_hi * grad @ qpath[hi_t]
                        rows_a.append(a)
                        rows_b.append(b)

        belt = problem.belt
        bounds = problem.bounds
        want_lower = bounds.f_lower > 0.0
        want_upper = np.isfinite(bounds.f_upper)
        force_hinge_sum = float(
            np.sum(np.maximum(0.0, bounds.f_lower - force))
            + np.sum(np.maximum(0.0, force - bounds.f_upper))
            if (want_lower or want_upper) else 0.0)
        if want_lower or want_upper:
            # dF/ds at waypoint t (own stretch) and coupling to t-1 via the rate
            xb = x ** belt.beta
            xbm1 = np.where(x > 0.0, x ** (belt.beta - 1.0), 0.0)
            dF_own = belt.beta * xbm1 * (belt.k + belt.lam * rate) \
                + belt.lam * xb / problem.dt
            dF_prev = -belt.lam * xb / problem.dt
            sigma = (s > 0.0).astype(np.float64)
            for t in range(1, self.T + 1):
                fi = self.pos_of.get(t)
                fp = self.pos_of.get(t - 1)
                if fi is None and fp is None:
                    continue
                grad_t = (dF_own[t] * sigma[t]) * (unit[t] @ jac[t])
                grad_p = (dF_prev[t] * sigma[t - 1]) * (unit[t - 1] @ jac[t - 1])
                if want_upper:
                    self._append_force_row(rows_a, rows_b, qpath, t, fi, fp,
                                           grad_t, grad_p,
                                           force[t] - bounds.f_upper, +1.0)
                if want_lower:
                    g_t = grad_t
                    if s[t] <= 1e-9:
                        # Slack belt: the analytic slope is identically zero, so
                        # pull via the secant toward the static displacement
                        # meeting f_lower.
                        x_req = (bounds.f_lower / belt.k) ** (1.0 / belt.beta)
                        gap = x_req - s[t]
                        if gap > 1e-9:
                            g_t = ((bounds.f_lower - force[t]) / gap) * (unit[t] @ jac[t])
                    self._append_force_row(rows_a, rows_b, qpath, t, fi, fp,
                                           g_t, grad_p,
                                           bounds.f_lower - force[t], -1.0)
        if rows_a:
            A = np.array(rows_a)
            b = np.array(rows_b)
        else:
            A = np.zeros((0, self.n))
            b = np.zeros(0)
        return A, b, coll_hinge_sum + force_hinge_sum

    def _append_force_row(self, rows_a, rows_b, qpath, t, fi, fp, grad_t, grad_p, g0, sign):
        """One force hinge row: sign=+1 for F-f_upper, sign=-1 for f_lower-F."""
        a = np.zeros(self.n)
        b = g0
        if fi is not None:
            a[fi * 6:(fi + 1) * 6] = sign * grad_t
            b -= sign * grad_t @ qpath[t]
        if fp is not None:
            a[fp * 6:(fp + 1) * 6] = sign * grad_p
            b -= sign * grad_p @ qpath[t - 1]
        rows_a.append(a)
        rows_b.append(b)

    def exact_violation_sum(self, qpath):
        """All-pair collision hinge sum + force hinge sum (merit penalty term)."""
        problem = self.problem
        ee, _ = ee_batch(problem.robot.dh, qpath)
        _, _, _, force, _ = _belt_state(problem, np.ascontiguousarray(ee[:, :3, 3]))
        total = 0.0
        if problem.scene.obstacles:
            configs, _, _, _ = self.sample_set(qpath)
            sd = self._collision_sd(configs)
            total += float(np.sum(np.maximum(0.0, problem.scene.safety_margin - sd)))
        if problem.bounds.f_lower > 0.0:
            total += float(np.sum(np.maximum(0.0, problem.bounds.f_lower - force)))
        if np.isfinite(problem.bounds.f_upper):
            total += float(np.sum(np.maximum(0.0, force - problem.bounds.f_upper)))
        return total

    def enforced_max_violation(self, qpath):
        """Max violation over the full enforced set (incl. interior samples)."""
        problem = self.problem
        ee, _ = ee_batch(problem.robot.dh, qpath)
        _, _, _, force, _ = _belt_state(problem, np.ascontiguousarray(ee[:, :3, 3]))
        worst = 0.0
        if problem.scene.obstacles:
            configs, _, _, _ = self.sample_set(qpath)
            sd = self._collision_sd(configs)
            worst = max(0.0, problem.scene.safety_margin - float(sd.min()))
        if problem.bounds.f_lower > 0.0:
            worst = max(worst, float(np.max(np.maximum(0.0, problem.bounds.f_lower - force))))
        if np.isfinite(problem.bounds.f_upper):
            worst = max(worst, float(np.max(np.maximum(0.0, force - problem.bounds.f_upper))))
        return worst


def _fixed_waypoint_infeasibility(problem: PlanProblem, qpath) -> str:
    """Unfixable violations at fixed waypoints (endpoints and pins).

    Collision margins there are constants of the problem; the belt force is
    constant where the incoming rate cannot help (slack, or a cap the rate
    range cannot reach). Returns a description or None.
    """
    fixed_ts = sorted({0, problem.T, *problem.pinned.keys()})
    margin = problem.scene.safety_margin
    msgs = []
    qs = qpath[fixed_ts]
    if problem.scene.obstacles:
        sd, _, _, _ = collision_batch(
            problem.robot.dh, np.ascontiguousarray(qs),
            problem.robot._sph_frame, problem.robot._sph_local,
            problem.robot._sph_radius, problem.scene._obs_kind,
            problem.scene._obs_data)
        sd_min = sd.reshape(len(fixed_ts), -1).min(axis=1)
        for t, v in zip(fixed_ts, sd_min):
            if margin - v > 1e-9:
                msgs.append(f"waypoint {t} is fixed with signed distance "
                            f"{v:.4f} < margin {margin}")
    ee, _ = ee_batch(problem.robot.dh, np.ascontiguousarray(qs))
    reach = np.linalg.norm(ee[:, :3, 3] - problem.scene.belt_anchor[None, :],
                           axis=1)
    x = np.maximum(reach - problem.belt.rest_length, 0.0)
    for t, xt in zip(fixed_ts, x):
        xb = xt ** problem.belt.beta
        f_static = problem.belt.k * xb
        f_max = f_static + problem.belt.lam * xb * (xt / problem.dt)
        if t == 0:
            f_max = f_static  # the first waypoint's rate is defined as zero
        if problem.bounds.f_lower - f_max > 1e-9:
            msgs.append(f"waypoint {t} is fixed with reachable force at most "
                        f"{f_max:.3f} N < f_lower {problem.bounds.f_lower}")
        if t == 0 and f_static - problem.bounds.f_upper > 1e-9:
            msgs.append(f"waypoint 0 is fixed with force {f_static:.3f} N "
                        f"> f_upper {problem.bounds.f_upper}")
    return "; ".join(msgs) if msgs else None


def shell_tangent_variations(problem: PlanProblem, count: int, sigma: float,
                             seed: int, index: int = None):
    """Seeded via perturbations that respect the belt-force shell.

    When a lower force bound is active the end-effector must stay within a
    thin spherical shell around the anchor, so radial via offsets are
    unreachable by construction; the sampled offsets are projected onto the
    shell tangent plane at the seed via.
    """
    rng = np.random.default_rng(seed)
    seed_path = _seed_path(problem)
    if index is None:
        idx = problem.T // 2
        if problem.scene.obstacles:
            # prefer the interior waypoint with the most collision clearance;
            # pins adjacent to an obstacle are rarely satisfiable
            sd, _, _, _ = collision_batch(
                problem.robot.dh, seed_path, problem.robot._sph_frame,
                problem.robot._sph_local, problem.robot._sph_radius,
                problem.scene._obs_kind, problem.scene._obs_data)
            sd_min = sd.reshape(problem.T + 1, -1).min(axis=1)
            lo = max(1, problem.T // 4)
            hi = min(problem.T, 3 * problem.T // 4 + 1)
            idx = int(np.argmax(sd_min[lo:hi])) + lo
    else:
        idx = int(index)
    seed_q = seed_path[idx]
    ee, _ = ee_batch(problem.robot.dh, seed_q[None, :])
    p_mid = ee[0, :3, 3]
    rel = p_mid - problem.scene.belt_anchor
    reach = float(np.linalg.norm(rel))
    banded = problem.bounds.f_lower > 0 and reach > 1e-9
    if banded:
        belt = problem.belt
        r_lo = belt.rest_length + (problem.bounds.f_lower / belt.k) ** (1.0 / belt.beta)
        if np.isfinite(problem.bounds.f_upper):
            r_hi = belt.rest_length \
                + (problem.bounds.f_upper / belt.k) ** (1.0 / belt.beta)
        else:
            r_hi = reach + 1.0
        pad = 0.2 * (r_hi - r_lo)
        r_target = float(np.clip(reach, r_lo + pad, r_hi - pad))
    out = []
    for _ in range(count):
        delta = rng.normal(0.0, sigma, 3)
        if banded:
            # place the via on the feasible shell: tangential offset, then
            # re-projected to an in-band radius
            direction = rel + delta - (delta @ rel / reach ** 2) * rel
            direction /= np.linalg.norm(direction)
            target = problem.scene.belt_anchor + r_target * direction
            delta = target - p_mid
        out.append({"index": idx, "delta": delta.tolist()})
    return out


def _seed_path(problem: PlanProblem) -> np.ndarray:
    alphas = np.linspace(0.0, 1.0, problem.T + 1)
    seed = problem.q_start[None, :] + alphas[:, None] * (problem.q_goal - problem.q_start)
    for idx, qv in problem.pinned.items():
        seed[idx] = qv
    return seed


def plan(problem: PlanProblem, options: SolverOptions = None):
    """Solve for a feasible minimum-length path; returns (Path, SolveReport).

    Raises InfeasiblePlanError (with the best path found and its report)
    when the constraint violation cannot be brought below ctol within the
    penalty-escalation budget.
    """
    options = options or SolverOptions()
    sub = _Subproblem(problem, options)
    qpath = _seed_path(problem)
    np.clip(qpath, problem.robot.joint_lower, problem.robot.joint_upper, out=qpath)
    for idx, qv in problem.pinned.items():
        qpath[idx] = qv
    qpath[0] = problem.q_start
    qpath[problem.T] = problem.q_goal

    unfixable = _fixed_waypoint_infeasibility(problem, qpath)
    if unfixable:
        path = path_from_joints(problem.robot, qpath, problem.dt)
        report = SolveReport(iterations=0,
                             final_merit=sub.objective(qpath),
                             max_violation=sub.enforced_max_violation(qpath),
                             converged=False, steps=[])
        raise InfeasiblePlanError(f"problem infeasible at fixed waypoints: "
                                  f"{unfixable}", path=path, report=report)

    mu = options.penalty_init
    trust = options.trust_init
    steps = []
    iteration = 0
    converged = False

    best_q = qpath.copy()
    best_viol = np.inf
    refinement = 0

    while True:
        enforced_ok = False
        for escalation in range(options.max_penalty_escalations + 1):
            for _ in range(options.max_convexify_iterations):
                A, b, viol_sum = sub.linearize(qpath)
                acp, ari, aval = csc_from_dense(A)
                x_cur = sub.flatten(qpath)
                c = sub.quad_terms(qpath)
                merit_cur = sub.objective(qpath) + mu * viol_sum
                model_cur = _model_value(sub, x_cur, c, A, b, mu)
                progressed = False
                while True:
                    lo, hi = sub.box(x_cur, trust)
                    mu_rows = np.full(A.shape[0], mu)
                    x_new, _, _ = qp_hinge_cd(
                        sub.P_csc[0], sub.P_csc[1], sub.P_csc[2], sub.P_diag,
                        c, acp, ari, aval, b, mu_rows, lo, hi, x_cur,
                        options.hinge_smoothing, options.qp_max_sweeps,
                        options.qp_tol)
                    model_new = _model_value(sub, x_new, c, A, b, mu)
                    model_improve = model_cur - model_new
                    if model_improve < options.min_model_improve:
                        break  # locally optimal at this penalty level
                    q_new = sub.unflatten(x_new, qpath)
                    merit_new = sub.objective(q_new) \
                        + mu * sub.exact_violation_sum(q_new)
                    iteration += 1
                    true_improve = merit_cur - merit_new
                    if true_improve > options.accept_ratio * model_improve:
                        qpath = q_new
                        trust = min(trust * options.trust_expand, options.trust_max)
                        steps.append(StepRecord(iteration, mu, trust, merit_new,
                                                True, refinement))
                        progressed = True
                        break
                    trust *= options.trust_shrink
                    steps.append(StepRecord(iteration, mu, trust, merit_new,
                                            False, refinement))
                    if trust < options.min_trust:
                        break
                if not progressed:
                    break
            viol = sub.enforced_max_violation(qpath)
            if viol < best_viol:
                best_viol = viol
                best_q = qpath.copy()
            if viol <= options.ctol:
                enforced_ok = True
                break
            mu *= options.penalty_scale
            trust = max(trust, options.trust_init)
        if not enforced_ok:
            break
        if not problem.scene.obstacles:
            converged = True
            break
        dense_viol, offenders = sub.dense_violations(qpath)
        if dense_viol <= options.ctol or not offenders:
            converged = True
            break
        if refinement >= options.max_refinements:
            break  # penetration persists between samples
        sub.extra_samples.extend(offenders)
        refinement += 1
        trust = max(trust, options.trust_init)

    final_q = qpath if converged else best_q
    path = path_from_joints(problem.robot, final_q, problem.dt)
    report = SolveReport(
        iterations=iteration,
        final_merit=sub.objective(final_q) + mu * sub.exact_violation_sum(final_q),
        max_violation=sub.enforced_max_violation(final_q),
        converged=converged,
        steps=steps,
    )
    if not converged:
        raise InfeasiblePlanError(
            f"constraint violation {report.max_violation:.3e} > ctol "
            f"{options.ctol:.1e} after {options.max_penalty_escalations} "
            f"penalty escalations", path=path, report=report)
    return path, report


def _poses_of(problem, qpath):
    ee, _ = ee_batch(problem.robot.dh, qpath)
    return [pose_from_transform(ee[t]) for t in range(qpath.shape[0])]


def _model_value(sub, x, c, A, b, mu):
    quad = 0.5 * x @ sub.P @ x + c @ x
    if A.shape[0]:
        quad += mu * float(np.sum(np.maximum(0.0, A @ x + b)))
    return quad


@dataclass
class BatchItem:
    index: int
    path: Path = None
    report: SolveReport = None
    error: str = None

    @property
    def feasible(self):
        return self.path is not None and self.error is None


def sample_via_variations(count: int, sigma: float, seed: int, index: int = None):
    """Seeded list of via-position perturbations for batch planning."""
    rng = np.random.default_rng(seed)
    return [{"index": index, "delta": rng.normal(0.0, sigma, size=3).tolist()}
            for _ in range(count)]


def batch_plan(problem: PlanProblem, variations, options: SolverOptions = None):
    """Plan one path per via variation; infeasible items are recorded, not raised.

    Each variation is a dict with optional ``index`` (defaults to the middle
    waypoint) and ``delta`` (an xyz offset of the via pose). A missing/zero
    delta degenerates to the unmodified problem. The via is enforced by
    pinning the corresponding joint waypoint, displaced along the
    least-squares joint direction for the requested xyz offset.
    """
    if not variations:
        raise DomainError("batch_plan needs at least one variation")
    options = options or SolverOptions()
    seed = _seed_path(problem)
    results = []
    for i, var in enumerate(variations):
        var = var or {}
        delta = np.asarray(var.get("delta", (0.0, 0.0, 0.0)), dtype=np.float64)
        idx = var.get("index")
        idx = problem.T // 2 if idx is None else int(idx)
        try:
            if np.any(delta != 0.0):
                from .kernels import dh_frames, point_jacobian_frames
                frames = dh_frames(problem.robot.dh, seed[idx])
                target = frames[6, :3, 3] + delta
                q_via = seed[idx].copy()
                jac = np.empty((3, 6))
                for _ in range(25):  # damped least-squares to the via target
                    frames = dh_frames(problem.robot.dh, q_via)
                    err = target - frames[6, :3, 3]
                    if np.linalg.norm(err) < 1e-10:
                        break
                    point_jacobian_frames(frames, 6, frames[6, :3, 3], jac)
                    dq = np.linalg.lstsq(jac, err, rcond=None)[0]
                    q_via = np.clip(q_via + np.clip(dq, -0.2, 0.2),
                                    problem.robot.joint_lower,
                                    problem.robot.joint_upper)
                prob_i = dataclasses.replace(problem, pinned={idx: q_via})
            else:
                prob_i = problem
            path, report = plan(prob_i, options)
            results.append(BatchItem(index=i, path=path, report=report))
        except InfeasiblePlanError as exc:
            results.append(BatchItem(index=i, path=exc.path, report=exc.report,
                                     error=str(exc)))
    return results
