"""End-to-end estimation pipelines: error-propagation figures of merit for
direct photocounting (Protocol I) and the cascaded decoder scheme
(Protocol II), sensitivity sweeps over system size, and power-law fits.

The estimation error prefactor is ``sqrt(theta''(0)) / |d theta'(0)/domega|``
with the variance rate from the tilted-generator eigenvalue and the mean
rate's drive derivative from stationary intensities.  Quoted values always
ride with their Cramer-Rao-type floor, the inverse sensitivity bound of the
emission field.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionCapError, StencilError, ValidationError
from .liouville import (
    CASCADED_EXACT_CAP,
    ModelParams,
    build_btc_generator,
    build_cascaded_generator,
    stationary_state,
)
from .spectral import qfi_rate, scgf_curve
from .trajectories import TrajectoryConfig, mc_estimation_error


@dataclass(frozen=True)
class ProtocolResult:
    """Estimation error prefactor with its ingredients and the theoretical
    floor ``1 / S_omega`` for the same drive."""

    params: ModelParams
    delta_omega_bar: float
    intensity_derivative: float
    sigma_prefactor: float
    method: str
    bound: float | None = None
    mc_error_bar: float | None = None
    diagnostics: dict = field(default_factory=dict, repr=False)


def _intensity_derivative(make_generator, omega0, step, min_step=1e-5,
                          target=0.01, tol=1e-9):
    """Two-sided derivative of the stationary intensity with step-halving
    validation; the step shrinks until halving agreement reaches ``target``."""
    cache = {}

    def intensity(omega):
        if omega not in cache:
            cache[omega] = stationary_state(make_generator(omega), tol=tol).intensity
        return cache[omega]

    h = step
    while True:
        d_full = (intensity(omega0 + h) - intensity(omega0 - h)) / (2 * h)
        d_half = (intensity(omega0 + h / 2) - intensity(omega0 - h / 2)) / h
        rel = abs(d_full - d_half) / max(abs(d_half), 1e-14)
        if rel <= target:
            richardson = (4 * d_half - d_full) / 3
            return richardson, {"step": h, "halving_relative": rel}
        h /= 2
        if h < min_step:
            raise StencilError(
                f"intensity derivative did not stabilize down to step {h:.1e} "
                f"(last halving disagreement {rel:.2%})")


def protocol1_error(params: ModelParams, omega_step=1e-3, h_s=1e-3, tol=1e-9,
                    eig_method="auto", include_bound=True,
                    method="spectral", traj_cfg=None, d_omega=None,
                    n_workers=1) -> ProtocolResult:
    """Estimation error of direct photocounting of the single sensor."""
    if params.is_cascaded:
        raise ValidationError("protocol1_error() takes single-system parameters")
    diagnostics = {}
    if method == "trajectories":
        if traj_cfg is None or d_omega is None:
            raise ValidationError("trajectory method needs traj_cfg and d_omega")
        mc = mc_estimation_error(params, traj_cfg, d_omega, n_workers=n_workers)
        delta, deriv, sigma = mc.delta_omega_bar, mc.intensity_derivative, mc.sigma_prefactor
        mc_error = mc.error_bar
    elif method == "spectral":
        scgf = scgf_curve(params, tol=tol, h_s=h_s, method=eig_method)
        sigma = float(np.sqrt(scgf.theta_pp0))
        deriv, dinfo = _intensity_derivative(
            lambda w: build_btc_generator(params.with_omega(w)),
            params.omega, omega_step, tol=tol)
        diagnostics["derivative"] = dinfo
        diagnostics["theta_pp0"] = scgf.theta_pp0
        if abs(deriv) < 1e-12:
            raise StencilError("flat intensity derivative; estimator undefined here")
        delta = sigma / abs(deriv)
        mc_error = None
    else:
        raise ValidationError(f"unknown method {method!r}")
    bound = None
    if include_bound:
        bound = 1.0 / qfi_rate(params, tol=tol, method=eig_method).sensitivity
    return ProtocolResult(params=params, delta_omega_bar=float(delta),
                          intensity_derivative=float(deriv),
                          sigma_prefactor=float(sigma), method=method,
                          bound=bound, mc_error_bar=mc_error,
                          diagnostics=diagnostics)


def protocol2_error(params: ModelParams, omega_step=1e-3, h_s=1e-3, tol=1e-9,
                    eig_method="auto", include_bound=True,
                    method="spectral", traj_cfg=None, d_omega=None,
                    n_workers=1) -> ProtocolResult:
    """Estimation error of the cascaded sensor/decoder photocount.

    The matched-drive point ``omega == omega_d`` emits nothing and is
    excluded; sweeps must straddle it.  The exact path is capped at
    ``N <= 14``; larger systems go through trajectories.
    """
    if not params.is_cascaded:
        raise ValidationError("protocol2_error() needs cascaded parameters")
    if params.omega == params.omega_d:
        raise ValidationError(
            "the matched-drive point emits no light; evaluate on either side of it")
    diagnostics = {}
    if method == "trajectories":
        if traj_cfg is None or d_omega is None:
            raise ValidationError("trajectory method needs traj_cfg and d_omega")
        mc = mc_estimation_error(params, traj_cfg, d_omega, n_workers=n_workers)
        delta, deriv, sigma = mc.delta_omega_bar, mc.intensity_derivative, mc.sigma_prefactor
        mc_error = mc.error_bar
        diagnostics["derivative_stderr"] = mc.derivative_stderr
    elif method == "spectral":
        if params.n_spins > CASCADED_EXACT_CAP:
            raise DimensionCapError(
                f"exact cascaded solves are capped at N = {CASCADED_EXACT_CAP}; "
                f"use method='trajectories'")
        scgf = scgf_curve(params, tol=tol, h_s=h_s, method=eig_method)
        sigma = float(np.sqrt(scgf.theta_pp0))
        deriv, dinfo = _intensity_derivative(
            lambda w: build_cascaded_generator(params.with_omega(w)),
            params.omega, omega_step, tol=tol)
        diagnostics["derivative"] = dinfo
        diagnostics["theta_pp0"] = scgf.theta_pp0
        if abs(deriv) < 1e-12:
            raise StencilError("flat intensity derivative; estimator undefined here")
        delta = sigma / abs(deriv)
        mc_error = None
    else:
        raise ValidationError(f"unknown method {method!r}")
    bound = None
    if include_bound:
        sensor = ModelParams(params.n_spins, params.omega, kappa=params.kappa)
        bound = 1.0 / qfi_rate(sensor, tol=tol, method=eig_method).sensitivity
    return ProtocolResult(params=params, delta_omega_bar=float(delta),
                          intensity_derivative=float(deriv),
                          sigma_prefactor=float(sigma), method=method,
                          bound=bound, mc_error_bar=mc_error,
                          diagnostics=diagnostics)


@dataclass(frozen=True)
class ScalingFit:
    """Log-log least-squares fit over the largest ``fit_window`` sizes."""

    sizes: np.ndarray
    values: np.ndarray
    exponent: float
    prefactor: float
    fit_window: int
    residual_rms: float


def fit_power_law(sizes, values, fit_window=6) -> ScalingFit:
    """Fit ``value = prefactor * N^exponent`` on the ``fit_window`` largest
    sizes; values must be positive."""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.shape != values.shape or sizes.ndim != 1:
        raise ValidationError("sizes and values must be matching 1-d arrays")
    if len(sizes) < fit_window:
        raise ValidationError(f"need at least fit_window = {fit_window} sizes")
    if np.any(values <= 0) or np.any(sizes <= 0):
        raise ValidationError("power-law fit requires positive sizes and values")
    order = np.argsort(sizes)
    sizes, values = sizes[order], values[order]
    xs = np.log(sizes[-fit_window:])
    ys = np.log(values[-fit_window:])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return ScalingFit(sizes=sizes, values=values, exponent=float(slope),
                      prefactor=float(np.exp(intercept)), fit_window=fit_window,
                      residual_rms=float(np.sqrt(np.mean(resid**2))))


def _sweep_point(args):
    (mode, n, omega_over_omega_c, omega_d_over_omega_c, delta_omega, kappa,
     exact_cap, traj_cfg, n_workers_inner, tol) = args
    if mode == "bound":
        params = ModelParams.from_critical_ratio(n, omega_over_omega_c, kappa=kappa)
        return n, qfi_rate(params, tol=tol).sensitivity
    if mode == "protocol1":
        params = ModelParams.from_critical_ratio(n, omega_over_omega_c, kappa=kappa)
        return n, protocol1_error(params, tol=tol, include_bound=False).delta_omega_bar
    if mode == "protocol2":
        omega_d = omega_d_over_omega_c * kappa * n / 2.0
        params = ModelParams(n, omega_d + delta_omega, omega_d=omega_d, kappa=kappa)
        if n <= exact_cap:
            res = protocol2_error(params, tol=tol, include_bound=False)
        else:
            if traj_cfg is None:
                raise ValidationError(
                    f"N = {n} exceeds the exact cap {exact_cap}; supply traj_cfg")
            res = protocol2_error(params, method="trajectories", traj_cfg=traj_cfg,
                                  d_omega=max(delta_omega / 4, 1e-3),
                                  include_bound=False, n_workers=n_workers_inner)
        return n, res.delta_omega_bar
    raise ValidationError(f"unknown sweep mode {mode!r}")


def sensitivity_sweep(n_list, mode, omega_over_omega_c=None,
                      omega_d_over_omega_c=None, delta_omega=None,
                      fit_window=6, kappa=1.0, exact_cap=CASCADED_EXACT_CAP,
                      traj_cfg: TrajectoryConfig | None = None,
                      n_workers=1, tol=1e-9) -> ScalingFit:
    """Sweep system sizes and fit the scaling exponent of the chosen figure
    of merit: the sensitivity bound, or either protocol's error."""
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < fit_window:
        raise ValidationError(f"need at least fit_window = {fit_window} sizes")
    if mode in ("bound", "protocol1") and omega_over_omega_c is None:
        raise ValidationError(f"mode {mode!r} needs omega_over_omega_c")
    if mode == "protocol2" and (omega_d_over_omega_c is None or delta_omega is None):
        raise ValidationError("protocol2 sweeps need omega_d_over_omega_c and delta_omega")
    jobs = [(mode, n, omega_over_omega_c, omega_d_over_omega_c, delta_omega,
             kappa, exact_cap, traj_cfg, 1, tol) for n in n_list]
    if n_workers <= 1:
        points = [_sweep_point(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            points = list(pool.map(_sweep_point, jobs))
    points.sort(key=lambda item: item[0])
    sizes = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    return fit_power_law(sizes, values, fit_window=fit_window)
