"""Curve fitting of acoustic parameters to word error rate.

Provides closed-form polynomial least squares, a damped Gauss-Newton
(Levenberg-Marquardt) engine for nonlinear models, the four-coefficient
sigmoid mapping, and a train/hold-out evaluation helper.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import FitDiverged, JacobianSingular, RankDeficient


@dataclass(frozen=True)
class PolyModel:
    """Polynomial WER mapping, coefficients highest order first."""

    order: int
    coefficients: np.ndarray

    def __post_init__(self):
        if self.order not in (1, 3):
            raise ValueError("polynomial order must be 1 or 3")
        coeffs = np.asarray(self.coefficients, dtype=np.float64)
        if coeffs.size != self.order + 1:
            raise ValueError("need order + 1 coefficients")
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, a):
        return poly_eval(self, a)


@dataclass(frozen=True)
class SigmoidModel:
    """Sigmoid WER mapping: q1 + (q2 - q1) / (1 + exp(q3 * (a - q4)))."""

    q1: float
    q2: float
    q3: float
    q4: float

    @property
    def q(self):
        return np.array([self.q1, self.q2, self.q3, self.q4])

    def __call__(self, a):
        return sigmoid_eval(self.q, a)


@dataclass(frozen=True)
class LmConfig:
    """Levenberg-Marquardt iteration controls."""

    max_iterations: int = 100
    initial_damping: float = 1e-6
    damping_up: float = 10.0
    damping_down: float = 0.1
    cost_tolerance: float = 1e-12
    step_tolerance: float = 1e-12
    max_damping: float = 1e12

    def __post_init__(self):
        if min(self.max_iterations, self.initial_damping, self.damping_up,
               self.damping_down, self.cost_tolerance, self.step_tolerance) <= 0:
            raise ValueError("all LM controls must be positive")
        if self.cost_tolerance >= 1 or self.step_tolerance >= 1:
            raise ValueError("tolerances must be < 1")


def polyfit(a, wer, order):
    """Least-squares polynomial fit (QR-based, not normal equations)."""
    a = np.asarray(a, dtype=np.float64)
    wer = np.asarray(wer, dtype=np.float64)
    if order not in (1, 3):
        raise ValueError("polynomial order must be 1 or 3")
    if a.size < order + 1 or np.unique(a).size < order + 1:
        raise RankDeficient(
            f"need at least {order + 1} distinct abscissa values"
        )
    vandermonde = np.vander(a, order + 1)
    coeffs, _, rank, _ = np.linalg.lstsq(vandermonde, wer, rcond=None)
    if rank < order + 1:
        raise RankDeficient("Vandermonde system is rank deficient")
    return PolyModel(order, coeffs)


def poly_eval(model, a):
    """Evaluate a polynomial model by Horner's rule."""
    a = np.asarray(a, dtype=np.float64)
    result = np.zeros_like(a)
    for c in model.coefficients:
        result = result * a + c
    return result if result.ndim else float(result)


def lm_minimize(residual_fn, jacobian_fn, q0, cfg=None):
    """Minimize ``sum(residual_fn(q)**2)`` by damped Gauss-Newton steps.

    Returns ``(q, final_cost, iterations)`` for the best accepted point.
    Accepted-step costs are non-increasing by construction.
    """
    cfg = cfg or LmConfig()
    q = np.asarray(q0, dtype=np.float64).copy()
    r = residual_fn(q)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise FitDiverged("initial cost is not finite")
    damping = cfg.initial_damping
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        jac = jacobian_fn(q)
        g = jac.T @ r
        hessian = jac.T @ jac
        accepted = False
        solve_failed = True
        while damping <= cfg.max_damping:
            try:
                step = np.linalg.solve(
                    hessian + damping * np.eye(q.size), -g
                )
                solve_failed = False
            except np.linalg.LinAlgError:
                damping *= cfg.damping_up
                continue
            q_new = q + step
            r_new = residual_fn(q_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                improvement = cost - cost_new
                q, r, cost = q_new, r_new, cost_new
                damping = max(damping * cfg.damping_down, 1e-15)
                accepted = True
                break
            damping *= cfg.damping_up
        if not accepted:
            if not np.isfinite(cost):
                raise FitDiverged("cost became non-finite")
            if solve_failed:
                raise JacobianSingular(
                    "damped normal equations stayed singular to the cap"
                )
            break  # converged: no step improves the cost
        if np.linalg.norm(step) <= cfg.step_tolerance * (
            np.linalg.norm(q) + cfg.step_tolerance
        ):
            break
        if improvement <= cfg.cost_tolerance * max(cost, 1.0):
            break
    return q, cost, iterations


def sigmoid_eval(q, a):
    """Evaluate the four-coefficient sigmoid at ``a``."""
    q1, q2, q3, q4 = q
    z = np.clip(q3 * (np.asarray(a, dtype=np.float64) - q4), -500.0, 500.0)
    out = q1 + (q2 - q1) / (1.0 + np.exp(z))
    return out if out.ndim else float(out)


def sigmoid_jacobian(q, a):
    """Analytic Jacobian of the sigmoid w.r.t. its four coefficients."""
    q1, q2, q3, q4 = q
    a = np.asarray(a, dtype=np.float64)
    z = np.clip(q3 * (a - q4), -500.0, 500.0)
    e = np.exp(z)
    denom = 1.0 + e
    s = 1.0 / denom
    # d/dz of 1/(1+exp(z)) = -exp(z)/(1+exp(z))^2
    dz = -(q2 - q1) * e / denom**2
    jac = np.empty((a.size, 4))
    jac[:, 0] = 1.0 - s
    jac[:, 1] = s
    jac[:, 2] = dz * (a - q4)
    jac[:, 3] = dz * (-q3)
    return jac


def _sigmoid_initial_guess(a, wer):
    """Decile-based deterministic starting point for the sigmoid fit."""
    order = np.argsort(a)
    decile = max(1, a.size // 10)
    q1 = float(np.mean(wer[order[-decile:]]))   # plateau at high a
    q2 = float(np.mean(wer[order[:decile]]))    # plateau at low a
    q4 = float(np.median(a))
    iqr = float(np.percentile(a, 75) - np.percentile(a, 25))
    q3 = 4.0 / iqr if iqr > 0 else 1.0
    return np.array([q1, q2, q3, q4])


def sigmoid_fit(a, wer, cfg=None):
    """Fit the sigmoid mapping by multistart Levenberg-Marquardt.

    Three deterministic perturbations of a decile-based initial guess are
    tried; the fit with the lowest final cost wins. Flat data yields a
    plateau model rather than an error.
    """
    a = np.asarray(a, dtype=np.float64)
    wer = np.asarray(wer, dtype=np.float64)
    if a.size < 8:
        raise ValueError("need at least 8 points for a sigmoid fit")
    if np.unique(a).size < 2:
        raise ValueError("abscissa must not be constant")
    cfg = cfg or LmConfig(max_iterations=200)

    def residuals(q):
        return sigmoid_eval(q, a) - wer

    def jacobian(q):
        return sigmoid_jacobian(q, a)

    q0 = _sigmoid_initial_guess(a, wer)
    starts = [
        q0,
        q0 * np.array([1.0, 1.0, 0.25, 1.0]),
        q0 + np.array([0.0, 0.0, 0.0, np.std(a) * 0.5]),
    ]
    best = None
    failures = []
    for start in starts:
        try:
            q, cost, _ = lm_minimize(residuals, jacobian, start, cfg)
        except (FitDiverged, JacobianSingular) as exc:
            failures.append(exc)
            continue
        if best is None or cost < best[1]:
            best = (q, cost)
    if best is None:
        raise FitDiverged(f"all sigmoid starts failed: {failures}")
    q = best[0]
    return SigmoidModel(*q)


def fit_model(a, wer, kind):
    """Fit one of the supported mapping kinds: linear, cubic, sigmoid."""
    if kind == "linear":
        return polyfit(a, wer, 1)
    if kind == "cubic":
        return polyfit(a, wer, 3)
    if kind == "sigmoid":
        return sigmoid_fit(a, wer)
    raise ValueError(f"unknown model kind: {kind}")


def fit_and_evaluate(train, test, param_index, kind):
    """Fit on the training records, score on the held-out records.

    ``train`` and ``test`` are sequences of records exposing
    ``acoustic_params`` and ``true_wer``. Returns
    ``(model, rho_test, rmse_test)``.
    """
    from .metrics import pearson_abs, rmse

    def column(records):
        a = np.array(
            [r.acoustic_params.as_vector()[param_index] for r in records]
        )
        w = np.array([r.true_wer for r in records])
        keep = np.isfinite(a)
        return a[keep], w[keep]

    a_tr, w_tr = column(train)
    a_te, w_te = column(test)
    model = fit_model(a_tr, w_tr, kind)
    pred = model(a_te)
    return model, pearson_abs(pred, w_te), rmse(pred, w_te)


def model_to_json(model):
    """Serialize a fitted model as a JSON string."""
    if isinstance(model, PolyModel):
        payload = {
            "kind": "linear" if model.order == 1 else "cubic",
            "coefficients": model.coefficients.tolist(),
        }
    elif isinstance(model, SigmoidModel):
        payload = {"kind": "sigmoid", "coefficients": model.q.tolist()}
    else:
        raise TypeError(f"not a fit model: {type(model)!r}")
    return json.dumps(payload)


def model_from_json(text):
    """Inverse of :func:`model_to_json`."""
    payload = json.loads(text)
    kind = payload["kind"]
    coeffs = payload["coefficients"]
    if kind == "linear":
        return PolyModel(1, coeffs)
    if kind == "cubic":
        return PolyModel(3, coeffs)
    if kind == "sigmoid":
        return SigmoidModel(*coeffs)
    raise ValueError(f"unknown model kind: {kind}")
