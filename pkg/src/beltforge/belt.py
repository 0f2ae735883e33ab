"""Hunt-Crossley belt-force model and parameter identification.

Force law: F = k*x^beta + lam*x^beta*xdot, clamped below at zero (a belt can
pull but never push). Parameters are identified from displacement/force
samples with a damped Gauss-Newton (Levenberg-Marquardt) fit using the
analytic Jacobian.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitNonConvergenceError, InsufficientDataError
from .kernels import hc_force_array, hc_residual_jacobian

_K_FLOOR = 1e-9
_DAMPING_INIT = 1e-3
_DAMPING_MAX = 1e12
_SSE_RTOL = 1e-10


@dataclass(frozen=True)
class BeltParams:
    """Belt stiffness/damping parameters plus the slack rest length."""

    k: float
    beta: float
    lam: float
    rest_length: float

    def __post_init__(self):
        if not (self.k > 0):
            raise DomainError(f"stiffness k must be > 0, got {self.k}")
        if not (self.beta >= 1):
            raise DomainError(f"exponent beta must be >= 1, got {self.beta}")
        if not (self.lam >= 0):
            raise DomainError(f"damping lam must be >= 0, got {self.lam}")
        if not (self.rest_length > 0):
            raise DomainError(f"rest_length must be > 0, got {self.rest_length}")

    def to_payload(self):
        return {"k": self.k, "beta": self.beta, "lam": self.lam,
                "rest_length": self.rest_length}

    @classmethod
    def from_payload(cls, d):
        return cls(k=d["k"], beta=d["beta"], lam=d["lam"],
                   rest_length=d["rest_length"])


@dataclass(frozen=True)
class ForceBounds:
    """Allowed belt-force band [f_lower, f_upper]; f_upper may be inf."""

    f_lower: float
    f_upper: float

    def __post_init__(self):
        if not (0 <= self.f_lower < self.f_upper):
            raise DomainError(
                f"need 0 <= f_lower < f_upper, got ({self.f_lower}, {self.f_upper})")

    def to_payload(self):
        return {"f_lower": self.f_lower, "f_upper": self.f_upper}

    @classmethod
    def from_payload(cls, d):
        return cls(f_lower=d["f_lower"], f_upper=d["f_upper"])


@dataclass(frozen=True)
class ForceSample:
    """One (displacement, displacement rate, measured force) triple, SI units."""

    displacement: float
    displacement_rate: float
    force: float

    def __post_init__(self):
        if self.displacement < 0:
            raise DomainError(
                f"sample displacement must be >= 0, got {self.displacement}")


@dataclass
class FitReport:
    """Levenberg-Marquardt fit diagnostics."""

    sse: float
    iterations: int
    accepted_steps: int
    converged: bool
    sse_trace: list = field(default_factory=list)  # initial SSE + accepted steps

    def to_payload(self):
        return {"sse": self.sse, "iterations": self.iterations,
                "accepted_steps": self.accepted_steps,
                "converged": self.converged, "sse_trace": list(self.sse_trace)}


def belt_force(params: BeltParams, displacement: float, displacement_rate: float = 0.0) -> float:
    """Evaluate the clamped Hunt-Crossley force for one displacement."""
    if displacement < 0:
        raise DomainError(f"displacement must be >= 0, got {displacement}")
    out = np.empty(1)
    hc_force_array(params.k, params.beta, params.lam,
                   np.array([float(displacement)]),
                   np.array([float(displacement_rate)]), out)
    return float(out[0])


def belt_force_array(params: BeltParams, displacement, displacement_rate) -> np.ndarray:
    """Vectorized clamped force; displacement entries must be >= 0."""
    x = np.ascontiguousarray(displacement, dtype=np.float64)
    xd = np.ascontiguousarray(displacement_rate, dtype=np.float64)
    if x.shape != xd.shape:
        raise DomainError("displacement and rate arrays must match in shape")
    if np.any(x < 0):
        raise DomainError("displacement must be >= 0")
    out = np.empty_like(x)
    hc_force_array(params.k, params.beta, params.lam, x, xd, out)
    return out


def _clip_params(vec):
    vec = vec.copy()
    vec[0] = max(vec[0], _K_FLOOR)   # k > 0
    vec[1] = max(vec[1], 1.0)        # beta >= 1 keeps the force differentiable at x=0
    vec[2] = max(vec[2], 0.0)        # lam >= 0
    return vec


def _residuals(vec, x, xd, f):
    res = np.empty_like(x)
    jac = np.empty((x.shape[0], 3))
    hc_residual_jacobian(vec[0], vec[1], vec[2], x, xd, f, res, jac)
    return res, jac


def fit_params(samples, initial_guess: BeltParams, max_iterations: int = 200):
    """Fit (k, beta, lam) to force samples; returns (BeltParams, FitReport).

    Damped least squares with multiplicative damping adaptation (x10 on a
    rejected step, /10 on acceptance); a step is accepted only if it lowers
    the SSE. Raises InsufficientDataError for degenerate inputs and
    FitNonConvergenceError (carrying the best parameters so far) when the
    iteration budget runs out.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise InsufficientDataError(
            f"need at least 3 samples, got {len(samples)}")
    x = np.array([s.displacement for s in samples], dtype=np.float64)
    xd = np.array([s.displacement_rate for s in samples], dtype=np.float64)
    f = np.array([s.force for s in samples], dtype=np.float64)
    if np.unique(x).size < 3:
        raise InsufficientDataError(
            "need at least 3 distinct displacements to identify (k, beta, lam)")

    vec = _clip_params(np.array([initial_guess.k, initial_guess.beta,
                                 initial_guess.lam]))
    res, jac = _residuals(vec, x, xd, f)
    sse = float(res @ res)
    sse_atol = 1e-18 * max(float(f @ f), 1.0)
    trace = [sse]
    damping = _DAMPING_INIT
    accepted = 0
    iterations = 0
    converged = False

    for it in range(max_iterations):
        grad = jac.T @ res
        if sse <= sse_atol or np.max(np.abs(grad)) < 1e-12 * (1.0 + sse):
            converged = True
            break
        iterations = it + 1
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-12)
        stepped = False
        while damping <= _DAMPING_MAX:
            try:
                step = np.linalg.solve(hess + damping * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            cand = _clip_params(vec + step)
            cres, cjac = _residuals(cand, x, xd, f)
            csse = float(cres @ cres)
            if csse < sse:
                rel_drop = (sse - csse) / max(sse, 1e-300)
                vec, res, jac, sse = cand, cres, cjac, csse
                trace.append(sse)
                accepted += 1
                damping = max(damping / 10.0, 1e-14)
                stepped = True
                if rel_drop < _SSE_RTOL or sse <= sse_atol:
                    converged = True
                break
            damping *= 10.0
        if not stepped:
            break  # damping saturated without an improving step
        if converged:
            break

    report = FitReport(sse=sse, iterations=iterations, accepted_steps=accepted,
                       converged=converged, sse_trace=trace)
    params = BeltParams(k=float(vec[0]), beta=float(vec[1]), lam=float(vec[2]),
                        rest_length=initial_guess.rest_length)
    if not converged:
        raise FitNonConvergenceError(
            f"no SSE reduction to tolerance within {max_iterations} iterations "
            f"(sse={sse:.6g})", best_params=params, report=report)
    return params, report


def generate_samples(params: BeltParams, displacements, rates, noise_sigma: float = 0.0,
                     rng=None):
    """Synthesize ForceSamples from known parameters (test/demo helper)."""
    x = np.asarray(displacements, dtype=np.float64)
    xd = np.asarray(rates, dtype=np.float64)
    xb = x ** params.beta
    force = params.k * xb + params.lam * xb * xd
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        force = force + rng.normal(0.0, noise_sigma, size=force.shape)
    return [ForceSample(float(a), float(b), float(c))
            for a, b, c in zip(x, xd, force)]


def read_force_samples_csv(path):
    """Load samples from a CSV with header ``displacement,rate,force``."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"displacement", "rate", "force"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DomainError(
                f"CSV must carry header displacement,rate,force, got {reader.fieldnames}")
        for row in reader:
            out.append(ForceSample(float(row["displacement"]),
                                   float(row["rate"]), float(row["force"])))
    return out
