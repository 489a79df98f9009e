"""Weighted least-squares fits for the decay, g2(t) and linear mode-scaling curves.

fit_decay
    R(t) = R0 (exp(-t^2/tau0^2) + exp(-t/tau0)) / 2.  The model is linear in
    R0, so R0 is eliminated at fixed tau0 and the profiled objective is
    minimized over tau0 with a safeguarded (damped) Newton iteration inside
    a bracket found by a log-spaced scan.
fit_g2_curve
    one free parameter, xi_se, in g2 = 1 + R / (chi R + chi (1-R) xi_se A + Z);
    golden-section search on [0, 1] followed by Newton refinement.
fit_linear_origin
    slope through the origin, closed form.

Standard errors come from the inverse Gauss-Newton normal matrix.  With
``absolute_sigma`` (default) the supplied sigmas are taken at face value;
otherwise the covariance is rescaled by the reduced chi-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryOptimum, DegenerateData, DomainError, NonConvergence
from .memory_model import DecayModel, cavity_enhancement, retrieval_efficiency

REL_TOL = 1e-9
MAX_ITER = 200
TAU_BRACKET = (1.0, 1.0e6)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class FitResult:
    param_names: list
    values: list
    residual_norm: float
    std_errors: list
    converged: bool
    iterations: int
    at_boundary: bool = False
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[self.param_names.index(name)]

    def stderr(self, name):
        return self.std_errors[self.param_names.index(name)]

    def to_dict(self) -> dict:
        return {
            "params": dict(zip(self.param_names, self.values)),
            "std_errors": dict(zip(self.param_names, self.std_errors)),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "at_boundary": self.at_boundary,
        }


def _unpack(points, min_points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DomainError("points must be rows of (x, y) or (x, y, sigma)")
    if arr.shape[0] < min_points:
        raise DegenerateData(f"need at least {min_points} points, got {arr.shape[0]}")
    x, y = arr[:, 0], arr[:, 1]
    sigma = arr[:, 2] if arr.shape[1] == 3 else np.ones_like(x)
    if np.any(~np.isfinite(arr)):
        raise DomainError("points must be finite")
    if np.any(sigma <= 0):
        raise DomainError("sigmas must be positive")
    return x, y, 1.0 / sigma**2


# ---------------------------------------------------------------------------
# decay model


def decay_basis(t, tau):
    """g(t; tau) = (exp(-t^2/tau^2) + exp(-t/tau)) / 2 and its first two tau-derivatives."""
    t = np.asarray(t, dtype=float)
    e1 = np.exp(-(t / tau) ** 2)
    e2 = np.exp(-t / tau)
    a = 2.0 * t**2 / tau**3
    da = -6.0 * t**2 / tau**4
    b = t / tau**2
    db = -2.0 * t / tau**3
    g = 0.5 * (e1 + e2)
    g1 = 0.5 * (a * e1 + b * e2)
    g2 = 0.5 * ((da + a * a) * e1 + (db + b * b) * e2)
    return g, g1, g2


def decay_curve(t, R0, tau0):
    return R0 * decay_basis(t, tau0)[0]


def decay_jacobian(t, R0, tau0):
    """d model / d(R0, tau0), shape (n, 2)."""
    g, g1, _ = decay_basis(t, tau0)
    return np.column_stack([g, R0 * g1])


def _profile(tau, t, y, w):
    g, g1, g2 = decay_basis(t, tau)
    P, Q = np.sum(w * y * g), np.sum(w * g * g)
    if Q <= 0:
        return math.inf, 0.0, 0.0, 0.0
    P1, Q1 = np.sum(w * y * g1), 2.0 * np.sum(w * g * g1)
    P2, Q2 = np.sum(w * y * g2), 2.0 * np.sum(w * (g1 * g1 + g * g2))
    S = np.sum(w * y * y) - P * P / Q
    F1 = 2 * P * P1 / Q - P * P * Q1 / Q**2
    F2 = (
        2 * P1 * P1 / Q + 2 * P * P2 / Q - 4 * P * P1 * Q1 / Q**2
        - P * P * Q2 / Q**2 + 2 * P * P * Q1 * Q1 / Q**3
    )
    return S, -F1, -F2, P / Q


def fit_decay(points, *, tau_bracket=TAU_BRACKET, weighted: bool = True, absolute_sigma: bool = True) -> FitResult:
    """Fit (R0, tau0) to rows of (t_us, R, sigma)."""
    t, y, w = _unpack(points, 3)
    if len(np.unique(t)) < 2:
        raise DegenerateData("need at least two distinct storage times")
    if np.any(t < 0):
        raise DomainError("storage times must be non-negative")
    if not weighted:
        w = np.ones_like(w)
    lo, hi = tau_bracket

    # coarse scan in log tau to bracket the global minimum of the profile
    grid = np.geomspace(lo, hi, 241)
    S_grid = np.array([_profile(tau, t, y, w)[0] for tau in grid])
    k = int(np.argmin(S_grid))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    tau = grid[k]

    converged = False
    it = 0
    S, dS, d2S, _ = _profile(tau, t, y, w)
    for it in range(1, MAX_ITER + 1):
        if d2S > 0:
            step = -dS / d2S
        else:
            step = -math.copysign(0.25 * (b - a), dS)
        # damping: halve until the trial point stays in the bracket and does not go uphill
        trial = tau + step
        for _ in range(60):
            if a < trial < b:
                S_trial = _profile(trial, t, y, w)[0]
                if S_trial <= S * (1 + 1e-15) + 1e-300:
                    break
            step *= 0.5
            trial = tau + step
        else:
            trial = tau
        # shrink the bracket with the sign of the gradient at the new point
        S_new, dS_new, d2S_new, _ = _profile(trial, t, y, w)
        if dS_new > 0:
            b = trial
        elif dS_new < 0:
            a = trial
        change = abs(trial - tau) / tau
        tau, S, dS, d2S = trial, S_new, dS_new, d2S_new
        if change < REL_TOL or (b - a) / tau < REL_TOL:
            converged = True
            break

    S, _, _, R0 = _profile(tau, t, y, w)
    J = decay_jacobian(t, R0, tau)
    resid = y - R0 * decay_basis(t, tau)[0]
    S = float(np.sum(w * resid**2))
    try:
        cov = np.linalg.inv(J.T @ (w[:, None] * J))
    except np.linalg.LinAlgError:
        # R0 = 0 leaves tau0 unidentified
        cov = np.diag([math.inf, math.inf])
    if not absolute_sigma and len(t) > 2:
        cov *= S / (len(t) - 2)
    result = FitResult(["R0", "tau0"], [float(R0), float(tau)], S, [float(v) for v in np.sqrt(np.diag(cov))], converged, it)
    if not converged:
        raise NonConvergence("decay fit did not converge", result)
    return result


# ---------------------------------------------------------------------------
# g2(t) with xi_se free


def _g2_terms(xi, R, chi, A, Z):
    den = chi * R + chi * (1.0 - R) * xi * A + Z
    c = chi * (1.0 - R) * A
    model = 1.0 + R / den
    d1 = -R * c / den**2
    d2 = 2.0 * R * c * c / den**3
    return model, d1, d2


def _g2_setup(t, fixed):
    missing = {"chi", "R0", "tau0", "F", "Z"} - set(fixed)
    if missing:
        raise DomainError(f"fixed parameters missing: {sorted(missing)}")
    chi, Z = float(fixed["chi"]), float(fixed["Z"])
    A = cavity_enhancement(float(fixed["F"]))
    R = retrieval_efficiency(np.asarray(t, dtype=float), DecayModel(float(fixed["R0"]), float(fixed["tau0"])))
    return R, chi, A, Z


def g2_curve(t, xi_se, fixed: dict):
    R, chi, A, Z = _g2_setup(t, fixed)
    return _g2_terms(xi_se, R, chi, A, Z)[0]


def g2_jacobian(t, xi_se, fixed: dict):
    """d g2 / d xi_se, shape (n, 1)."""
    R, chi, A, Z = _g2_setup(t, fixed)
    return np.reshape(_g2_terms(xi_se, R, chi, A, Z)[1], (-1, 1))


def fit_g2_curve(points, fixed: dict, *, xi_bounds=(0.0, 1.0), absolute_sigma: bool = True) -> FitResult:
    """Fit xi_se to rows of (t_us, g2, sigma) with chi, R0, tau0, F, Z held fixed.

    Raises BoundaryOptimum (carrying the result) when the optimum sits on a
    bound of ``xi_bounds``.
    """
    t, y, w = _unpack(points, 2)
    R, chi, A, Z = _g2_setup(t, fixed)
    if np.any(chi * R + Z <= 0):
        raise DomainError("model denominator vanishes (chi = 0 and Z = 0)")

    def S(xi):
        model = _g2_terms(xi, R, chi, A, Z)[0]
        return float(np.sum(w * (y - model) ** 2))

    lo, hi = xi_bounds
    # golden section
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    Sc, Sd = S(c), S(d)
    it = 0
    while (b - a) > 1e-6 and it < MAX_ITER:
        it += 1
        if Sc <= Sd:
            b, d, Sd = d, c, Sc
            c = b - GOLDEN * (b - a)
            Sc = S(c)
        else:
            a, c, Sc = c, d, Sd
            d = a + GOLDEN * (b - a)
            Sd = S(d)
    xi = 0.5 * (a + b)
    # Newton refinement with exact second derivative
    converged = False
    for _ in range(MAX_ITER):
        it += 1
        model, d1, d2 = _g2_terms(xi, R, chi, A, Z)
        r = y - model
        g = -2.0 * np.sum(w * r * d1)
        h = 2.0 * np.sum(w * (d1 * d1 - r * d2))
        step = -g / h if h > 0 else 0.0
        new = min(hi, max(lo, xi + step))
        if abs(new - xi) <= REL_TOL * max(abs(xi), 1e-3):
            xi = new
            converged = True
            break
        xi = new

    model, d1, _ = _g2_terms(xi, R, chi, A, Z)
    resid = y - model
    S_min = float(np.sum(w * resid**2))
    info = float(np.sum(w * d1 * d1))
    var = 1.0 / info if info > 0 else math.inf
    if not absolute_sigma and len(t) > 1:
        var *= S_min / (len(t) - 1)
    scale = max(1e-3, hi - lo)
    at_boundary = min(xi - lo, hi - xi) <= 1e-7 * scale
    result = FitResult(["xi_se"], [float(xi)], S_min, [math.sqrt(var)], converged, it, bool(at_boundary))
    if not converged:
        raise NonConvergence("g2 fit did not converge", result)
    if at_boundary:
        raise BoundaryOptimum(f"xi_se optimum pinned to the bound at {xi:.3g}", result)
    return result


# ---------------------------------------------------------------------------
# through-origin line


def linear_jacobian(N):
    """d (slope N) / d slope, shape (n, 1)."""
    return np.reshape(np.asarray(N, dtype=float), (-1, 1))


def fit_linear_origin(points) -> FitResult:
    """slope = sum(w N p) / sum(w N^2) for rows of (N, p[, sigma])."""
    x, y, w = _unpack(points, 1)
    sxx = float(np.sum(w * x * x))
    if sxx == 0.0:
        raise DegenerateData("all abscissae are zero")
    slope = float(np.sum(w * x * y)) / sxx
    resid = y - slope * x
    return FitResult(["slope"], [slope], float(np.sum(w * resid**2)), [math.sqrt(1.0 / sxx)], True, 1)
