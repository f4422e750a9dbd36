"""Single-parameter finite-size scaling with one irrelevant correction.

The normalized localization length is modelled as

``Λ(W, L) = Σ a[j1, j2] φ1^j1 φ2^j2``, ``φ1 = u1(w) L^(1/ν)``, ``φ2 = u2(w) L^(-y)``,

with ``w = (W - W_c)/W_c``, ``u1(w) = Σ_{j≥1} b1[j] w^j`` and
``u2(w) = Σ_{j≥0} b2[j] w^j``. The normalization ``a[1,0] = a[0,1] = 1`` fixes
the scale of the relevant and irrelevant fields. ``ν`` and ``y`` are optimized
through their logarithms so they stay positive.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as _chi2

from .dataset import DataPoint, points_digest

GOF_WARNING = 0.05
DEFAULT_WINDOW = 0.3
NU_STARTS = (0.8, 1.0, 1.5, 2.5)
Y_STARTS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ExpansionOrder:
    """Orders ``(m1, n1, m2, n2)`` of u1, of f in φ1, of u2 and of f in φ2."""

    m1: int
    n1: int
    m2: int = 0
    n2: int = 0

    def __post_init__(self):
        for name in ("m1", "n1", "m2", "n2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n1 < 1:
            raise ValueError("n1 must be at least 1")
        if self.m1 < 1:
            raise ValueError("m1 must be at least 1")

    @classmethod
    def parse(cls, text) -> "ExpansionOrder":
        if isinstance(text, ExpansionOrder):
            return text
        if isinstance(text, str):
            parts = [int(p) for p in text.replace("(", "").replace(")", "").split(",")]
        else:
            parts = [int(p) for p in text]
        if len(parts) != 4:
            raise ValueError("an expansion order has four integers m1,n1,m2,n2")
        return cls(*parts)

    def __str__(self):
        return f"({self.m1},{self.n1},{self.m2},{self.n2})"

    @property
    def irrelevant(self) -> bool:
        return self.n2 > 0

    def a_indices(self) -> list:
        """Free ``a[j1, j2]`` coefficients (the fixed ones excluded)."""
        n2 = self.n2 if self.irrelevant else 0
        return [(j1, j2) for j2 in range(n2 + 1) for j1 in range(self.n1 + 1)
                if (j1, j2) not in ((1, 0), (0, 1))]

    def parameter_names(self) -> list:
        names = ["W_c", "log_nu"]
        if self.irrelevant:
            names.append("log_y")
        names += [f"b1_{j}" for j in range(1, self.m1 + 1)]
        if self.irrelevant:
            names += [f"b2_{j}" for j in range(0, self.m2 + 1)]
        names += [f"a_{j1}{j2}" for j1, j2 in self.a_indices()]
        return names

    @property
    def n_params(self) -> int:
        return len(self.parameter_names())


class ScalingModel:
    """Vectorized evaluation of the scaling form for a fixed expansion order."""

    def __init__(self, order: ExpansionOrder):
        self.order = ExpansionOrder.parse(order)
        o = self.order
        self.names = o.parameter_names()
        self.index = {n: i for i, n in enumerate(self.names)}
        self.a_free = o.a_indices()
        n2 = o.n2 if o.irrelevant else 0
        self.a_shape = (o.n1 + 1, n2 + 1)

    def unpack(self, theta: np.ndarray) -> dict:
        """Named parameters from an array of shape ``(..., n_params)``."""
        theta = np.asarray(theta, dtype=float)
        o = self.order
        i = self.index
        out = {"W_c": theta[..., i["W_c"]], "nu": np.exp(theta[..., i["log_nu"]])}
        out["y"] = np.exp(theta[..., i["log_y"]]) if o.irrelevant else None
        out["b1"] = np.stack([theta[..., i[f"b1_{j}"]] for j in range(1, o.m1 + 1)], axis=-1)
        if o.irrelevant:
            out["b2"] = np.stack([theta[..., i[f"b2_{j}"]] for j in range(o.m2 + 1)], axis=-1)
        a = np.zeros(theta.shape[:-1] + self.a_shape)
        a[..., 1, 0] = 1.0
        if o.irrelevant:
            a[..., 0, 1] = 1.0
        for j1, j2 in self.a_free:
            a[..., j1, j2] = theta[..., i[f"a_{j1}{j2}"]]
        out["a"] = a
        return out

    def evaluate(self, theta, W, L) -> np.ndarray:
        """Predicted Λ; ``theta`` may carry leading batch dimensions."""
        theta = np.asarray(theta, dtype=float)
        W = np.asarray(W, dtype=float)
        L = np.asarray(L, dtype=float)
        p = self.unpack(theta)
        batch = theta.shape[:-1]
        Wc = p["W_c"][..., None]
        w = (W - Wc) / Wc
        logL = np.log(L)
        nu = p["nu"][..., None]
        b1 = p["b1"]
        u1 = np.zeros(batch + W.shape)
        for j in range(b1.shape[-1], 0, -1):
            u1 = (u1 + b1[..., j - 1, None]) * w
        phi1 = u1 * np.exp(logL / nu)
        a = p["a"]
        n1, n2 = self.a_shape[0] - 1, self.a_shape[1] - 1
        if n2 == 0:
            f = np.zeros_like(phi1)
            for j1 in range(n1, -1, -1):
                f = f * phi1 + a[..., j1, 0, None]
            return f
        y = p["y"][..., None]
        b2 = p["b2"]
        u2 = np.zeros(batch + W.shape)
        for j in range(b2.shape[-1] - 1, -1, -1):
            u2 = u2 * w + b2[..., j, None]
        phi2 = u2 * np.exp(-y * logL)
        f = np.zeros_like(phi1)
        for j2 in range(n2, -1, -1):
            inner = np.zeros_like(phi1)
            for j1 in range(n1, -1, -1):
                inner = inner * phi1 + a[..., j1, j2, None]
            f = f * phi2 + inner
        return f

    def critical_amplitude(self, theta, L: float | None = None) -> float:
        """Λ at ``W = W_c``: ``f(0, 0)``, or ``f(0, u2(0) L^-y)`` when ``L`` is given."""
        p = self.unpack(theta)
        a = p["a"]
        if L is None or not self.order.irrelevant:
            return float(a[0, 0])
        phi2 = p["b2"][0] * L ** (-p["y"])
        return float(sum(a[0, j2] * phi2 ** j2 for j2 in range(self.a_shape[1])))


def scaling_model(params: dict, W, L, order) -> np.ndarray:
    """Evaluate the scaling form from named parameters.

    Parameters
    ----------
    params : dict
        ``W_c``, ``nu``, optionally ``y``; ``b1`` (list for j = 1..m1), ``b2``
        (list for j = 0..m2) and ``a`` (dict ``(j1, j2) -> value``; the
        normalized entries may be omitted).
    """
    model = ScalingModel(order)
    return model.evaluate(pack_parameters(model, params), W, L)


def pack_parameters(model: ScalingModel, params: dict) -> np.ndarray:
    """Internal parameter vector from named parameters."""
    o = model.order
    if params["nu"] <= 0:
        raise ValueError("nu must be positive")
    theta = np.zeros(len(model.names))
    i = model.index
    theta[i["W_c"]] = params["W_c"]
    theta[i["log_nu"]] = math.log(params["nu"])
    if o.irrelevant:
        if params.get("y", 0) <= 0:
            raise ValueError("y must be positive")
        theta[i["log_y"]] = math.log(params["y"])
        for j, v in enumerate(params.get("b2", [])):
            theta[i[f"b2_{j}"]] = v
    for j, v in enumerate(params.get("b1", []), start=1):
        theta[i[f"b1_{j}"]] = v
    for (j1, j2), v in params.get("a", {}).items():
        if (j1, j2) in ((1, 0), (0, 1)):
            if v != 1:
                raise ValueError("a[1,0] and a[0,1] are fixed to 1")
            continue
        theta[i[f"a_{j1}{j2}"]] = v
    return theta


# --------------------------------------------------------------------- optimizer
@dataclass
class LMResult:
    theta: np.ndarray
    chi2: float
    iterations: int
    converged: bool
    message: str
    jacobian: np.ndarray = field(repr=False)


def _jacobian(fun, theta, r0, steps):
    """Forward-difference Jacobian with all perturbed points evaluated in one batch."""
    n = theta.size
    pert = np.repeat(theta[None, :], n, axis=0)
    pert[np.arange(n), np.arange(n)] += steps
    r = fun(pert)
    return ((r - r0[None, :]) / steps[:, None]).T


def levenberg_marquardt(fun, theta0, max_iter: int = 300, ftol: float = 1e-12, xtol: float = 1e-10,
                        gtol: float = 1e-10, tau: float = 1e-3) -> LMResult:
    """Minimize ``Σ r(θ)²`` by Levenberg–Marquardt with Nielsen's damping update.

    ``fun`` maps a batch of parameter vectors ``(k, n)`` to residuals ``(k, m)``.
    Each accepted step strictly decreases χ².
    """
    theta = np.array(theta0, dtype=float)
    eps = math.sqrt(np.finfo(float).eps)

    def residual(t):
        return fun(t[None, :])[0]

    r = residual(theta)
    cost = float(r @ r)
    if not np.isfinite(cost):
        return LMResult(theta, cost, 0, False, "non-finite residual at start", np.zeros((r.size, theta.size)))
    steps = eps * np.maximum(np.abs(theta), 1e-2)
    J = _jacobian(fun, theta, r, steps)
    A = J.T @ J
    g = J.T @ r
    mu = tau * float(np.max(np.diag(A))) if A.size else 0.0
    nu_factor = 2.0
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        scale = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        try:
            delta = np.linalg.solve(A + mu * np.diag(scale), -g)
        except np.linalg.LinAlgError:
            mu *= nu_factor
            nu_factor *= 2
            continue
        if np.linalg.norm(delta) <= xtol * (np.linalg.norm(theta) + xtol):
            converged, message = True, "step below tolerance"
            break
        trial = theta + delta
        r_new = residual(trial)
        cost_new = float(r_new @ r_new)
        predicted = float(-(delta @ g) * 2 - delta @ (A @ delta))
        actual = cost - cost_new
        if np.isfinite(cost_new) and actual > 0 and predicted > 0:
            rho = actual / predicted
            theta, r, old_cost, cost = trial, r_new, cost, cost_new
            steps = eps * np.maximum(np.abs(theta), 1e-2)
            J = _jacobian(fun, theta, r, steps)
            A = J.T @ J
            g = J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu_factor = 2.0
            if actual <= ftol * old_cost:
                converged, message = True, "relative chi2 decrease below tolerance"
                break
            if np.max(np.abs(g)) <= gtol * max(cost, 1e-300):
                converged, message = True, "gradient below tolerance"
                break
        else:
            mu *= nu_factor
            nu_factor *= 2.0
            if mu > 1e20 * max(np.max(np.diag(A)), 1.0):
                converged, message = True, "damping saturated at a minimum"
                break
    return LMResult(theta, cost, it, converged, message, J)


# --------------------------------------------------------------------- fitting
@dataclass
class FitResult:
    """Outcome of a scaling fit.

    ``ci`` maps ``W_c``, ``nu``, ``y``, ``lambda_c`` and ``lambda_c_finite``
    to 95% intervals once :func:`confidence` has been run (covariance-based
    intervals are stored in ``ci_covariance``).
    """

    order: ExpansionOrder
    theta: np.ndarray
    W_c: float
    nu: float
    y: float | None
    lambda_c: float
    lambda_c_finite: float
    a: dict
    b: dict
    chi2: float
    gof: float
    n_data: int
    n_params: int
    converged: bool
    rank_deficient: bool
    condition: float
    iterations: int
    message: str
    window: tuple
    L_min: int
    L_range: tuple
    data_digest: str
    stderr: dict = field(default_factory=dict)
    ci_covariance: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    ci_reliable: bool | None = None
    n_resamples: int = 0
    warnings: list = field(default_factory=list)

    @property
    def dof(self) -> int:
        return self.n_data - self.n_params

    def value(self, name: str):
        return {"W_c": self.W_c, "nu": self.nu, "y": self.y, "lambda_c": self.lambda_c,
                "lambda_c_finite": self.lambda_c_finite}[name]

    def to_dict(self) -> dict:
        def enc(d):
            return {f"{k[0]},{k[1]}" if isinstance(k, tuple) else k: v for k, v in d.items()}

        return {
            "order": [self.order.m1, self.order.n1, self.order.m2, self.order.n2],
            "theta": [float(t) for t in self.theta],
            "parameter_names": self.order.parameter_names(),
            "W_c": self.W_c, "nu": self.nu, "y": self.y,
            "lambda_c": self.lambda_c, "lambda_c_finite": self.lambda_c_finite,
            "a": enc(self.a), "b": enc(self.b),
            "chi2": self.chi2, "gof": self.gof, "n_data": self.n_data, "n_params": self.n_params,
            "converged": self.converged, "rank_deficient": self.rank_deficient,
            "condition": self.condition, "iterations": self.iterations, "message": self.message,
            "window": list(self.window), "L_min": self.L_min, "L_range": list(self.L_range),
            "data_digest": self.data_digest, "stderr": self.stderr,
            "ci_covariance": {k: list(v) for k, v in self.ci_covariance.items()},
            "ci": {k: list(v) for k, v in self.ci.items()},
            "ci_reliable": self.ci_reliable, "n_resamples": self.n_resamples,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        def dec(x):
            return {tuple(int(p) for p in k.split(",")): v for k, v in x.items()}

        return cls(
            order=ExpansionOrder(*d["order"]), theta=np.array(d["theta"], dtype=float),
            W_c=d["W_c"], nu=d["nu"], y=d["y"], lambda_c=d["lambda_c"],
            lambda_c_finite=d["lambda_c_finite"], a=dec(d["a"]), b=dec(d["b"]), chi2=d["chi2"],
            gof=d["gof"], n_data=d["n_data"], n_params=d["n_params"], converged=d["converged"],
            rank_deficient=d["rank_deficient"], condition=d["condition"],
            iterations=d["iterations"], message=d["message"], window=tuple(d["window"]),
            L_min=d["L_min"], L_range=tuple(d["L_range"]), data_digest=d["data_digest"],
            stderr=d.get("stderr", {}),
            ci_covariance={k: tuple(v) for k, v in d.get("ci_covariance", {}).items()},
            ci={k: tuple(v) for k, v in d.get("ci", {}).items()},
            ci_reliable=d.get("ci_reliable"), n_resamples=d.get("n_resamples", 0),
            warnings=list(d.get("warnings", [])))

    def to_json(self, extra: dict | None = None) -> str:
        out = self.to_dict()
        if extra:
            out.update(extra)
        return json.dumps(out, indent=2, sort_keys=True)


def gof(chi2: float, dof: int) -> float:
    """Upper-tail probability of the χ² distribution with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if chi2 <= 0:
        return 1.0
    return float(_chi2.sf(chi2, dof))


def _canonical(points) -> tuple:
    pts = sorted(points, key=lambda p: (p.L, p.W, p.lam, p.sigma))
    W = np.array([p.W for p in pts], dtype=float)
    L = np.array([p.L for p in pts], dtype=float)
    lam = np.array([p.lam for p in pts], dtype=float)
    sig = np.array([p.sigma for p in pts], dtype=float)
    return pts, W, L, lam, sig


def _initial_wc(W, L, lam) -> float:
    """Rough critical disorder: sign change of Λ(L_max) − Λ(L_min), else the W median."""
    Ls = np.unique(L)
    small, large = Ls[0], Ls[-1]
    ws = np.intersect1d(W[L == small], W[L == large])
    if ws.size >= 2:
        diff = np.array([lam[(L == large) & (W == w)][0] - lam[(L == small) & (W == w)][0] for w in ws])
        for i in range(ws.size - 1):
            if diff[i] == 0:
                return float(ws[i])
            if diff[i] * diff[i + 1] < 0:
                return float(ws[i] + (ws[i + 1] - ws[i]) * diff[i] / (diff[i] - diff[i + 1]))
    return float(np.median(W))


def _starts(model: ScalingModel, W, L, lam, sig, wc0: float, nu_starts, y_starts) -> list:
    """Initial parameter vectors for the multi-start search."""
    o = model.order
    i = model.index
    near = np.abs(W - wc0) <= np.quantile(np.abs(W - wc0), 0.3) + 1e-12
    a00 = float(np.median(lam[near]))
    out = []
    for nu in nu_starts:
        w = (W - wc0) / wc0
        x = w * L ** (1.0 / nu)
        # Λ ≈ a00 + b11 x: weighted linear least squares for a00 and b11
        design = np.stack([np.ones_like(x), x], axis=1) / sig[:, None]
        coef, *_ = np.linalg.lstsq(design, lam / sig, rcond=None)
        for y in (y_starts if o.irrelevant else (None,)):
            theta = np.zeros(len(model.names))
            theta[i["W_c"]] = wc0
            theta[i["log_nu"]] = math.log(nu)
            theta[i["b1_1"]] = coef[1] if np.isfinite(coef[1]) else 0.0
            theta[i["a_00"]] = coef[0] if np.isfinite(coef[0]) else a00
            if o.irrelevant:
                theta[i["log_y"]] = math.log(y)
            out.append(theta)
    return out


def fit(data, order, init: dict | None = None, window: float | None = DEFAULT_WINDOW,
        W_c_guess: float | None = None, nu_starts=NU_STARTS, y_starts=Y_STARTS,
        max_iter: int = 300) -> FitResult:
    """Least-squares fit of the scaling form to ``data``.

    Parameters
    ----------
    data : sequence of DataPoint
    order : ExpansionOrder or "m1,n1,m2,n2"
    init : dict, optional
        Named starting parameters (see :func:`scaling_model`); replaces the
        multi-start grid.
    window : float or None
        Points with ``|W - W_c0| / W_c0`` above this value are excluded, where
        ``W_c0`` is the initial critical disorder. ``None`` keeps all points.
    W_c_guess : float, optional
        Initial critical disorder; by default taken from the crossing of the
        smallest and largest sizes.

    Raises
    ------
    ValueError
        When fewer than three sizes remain or ``N_D <= N_P``.
    """
    model = ScalingModel(order)
    points = [p if isinstance(p, DataPoint) else DataPoint(*p) for p in data]
    if not points:
        raise ValueError("no data points to fit (unconverged rows are excluded)")
    pts, W, L, lam, sig = _canonical(points)
    if init is not None:
        theta_init = pack_parameters(model, init)
        wc0 = float(init["W_c"])
    else:
        theta_init = None
        wc0 = float(W_c_guess) if W_c_guess is not None else _initial_wc(W, L, lam)
    if window is not None:
        keep = np.abs(W - wc0) / abs(wc0) <= window + 1e-12
        W, L, lam, sig = W[keep], L[keep], lam[keep], sig[keep]
        pts = [p for p, k in zip(pts, keep) if k]
    sizes = np.unique(L)
    if sizes.size < 3:
        raise ValueError("data must contain at least three distinct system sizes")
    n_par = len(model.names)
    if W.size <= n_par:
        raise ValueError(f"need more data points ({W.size}) than parameters ({n_par})")

    def residuals(thetas):
        return (lam[None, :] - model.evaluate(thetas, W, L)) / sig[None, :]

    starts = [theta_init] if theta_init is not None else _starts(model, W, L, lam, sig, wc0,
                                                                  nu_starts, y_starts)
    best = None
    for theta0 in starts:
        with np.errstate(all="ignore"):
            res = levenberg_marquardt(residuals, theta0, max_iter=max_iter)
        if not np.isfinite(res.chi2):
            continue
        if best is None or res.chi2 < best.chi2 - 1e-12 * max(best.chi2, 1.0):
            best = res
    if best is None:
        raise RuntimeError("no starting point produced a finite chi-square")
    return _make_result(model, best, W, L, pts, wc0, window)


def _make_result(model: ScalingModel, res: LMResult, W, L, pts, wc0, window) -> FitResult:
    theta = res.theta
    J = res.jacobian
    sv = np.linalg.svd(J, compute_uv=False) if J.size else np.array([0.0])
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    rank_deficient = not cond < 1e12
    p = model.unpack(theta)
    o = model.order
    n_data, n_par = W.size, len(model.names)
    chi2 = float(res.chi2)
    L_min = int(L.min())
    a = {(j1, j2): float(p["a"][j1, j2]) for j1 in range(model.a_shape[0])
         for j2 in range(model.a_shape[1])}
    b = {(1, j): float(v) for j, v in enumerate(p["b1"], start=1)}
    b[(1, 0)] = 0.0
    if o.irrelevant:
        b.update({(2, j): float(v) for j, v in enumerate(p["b2"])})
    result = FitResult(
        order=o, theta=theta.copy(), W_c=float(p["W_c"]), nu=float(p["nu"]),
        y=float(p["y"]) if o.irrelevant else None,
        lambda_c=model.critical_amplitude(theta),
        lambda_c_finite=model.critical_amplitude(theta, L_min),
        a=a, b=b, chi2=chi2, gof=gof(chi2, n_data - n_par), n_data=n_data, n_params=n_par,
        converged=res.converged and not rank_deficient, rank_deficient=rank_deficient,
        condition=cond, iterations=res.iterations, message=res.message,
        window=(wc0, window if window is not None else math.inf), L_min=L_min,
        L_range=(L_min, int(L.max())), data_digest=points_digest(pts))
    if rank_deficient:
        result.warnings.append("Jacobian is rank deficient at the optimum; the fit is unstable")
    if result.gof < GOF_WARNING:
        result.warnings.append(f"goodness of fit {result.gof:.3g} is below {GOF_WARNING}")
    _covariance_intervals(model, result, J)
    return result


def _derived(model: ScalingModel, theta: np.ndarray, L_min: int) -> dict:
    p = model.unpack(theta)
    out = {"W_c": float(p["W_c"]), "nu": float(p["nu"]),
           "lambda_c": model.critical_amplitude(theta),
           "lambda_c_finite": model.critical_amplitude(theta, L_min)}
    if model.order.irrelevant:
        out["y"] = float(p["y"])
    return out


def _covariance_intervals(model: ScalingModel, result: FitResult, J: np.ndarray, z: float = 1.959963984540054):
    """Delta-method intervals from the inverse Gauss–Newton Hessian."""
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        return
    base = _derived(model, result.theta, result.L_min)
    eps = 1e-7
    grads = {k: np.zeros(result.theta.size) for k in base}
    for j in range(result.theta.size):
        t = result.theta.copy()
        h = eps * max(abs(t[j]), 1e-2)
        t[j] += h
        shifted = _derived(model, t, result.L_min)
        for k in base:
            grads[k][j] = (shifted[k] - base[k]) / h
    for k, v in base.items():
        se = float(math.sqrt(max(grads[k] @ cov @ grads[k], 0.0)))
        result.stderr[k] = se
        result.ci_covariance[k] = (v - z * se, v + z * se)


def predict(result: FitResult, W, L) -> np.ndarray:
    return ScalingModel(result.order).evaluate(result.theta, W, L)


def _refit_task(args):
    order, theta, W, L, sig, seed, max_iter = args
    model = ScalingModel(order)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    base = model.evaluate(theta, W, L)
    lam = base + sig * rng.standard_normal(base.shape)

    def residuals(thetas):
        return (lam[None, :] - model.evaluate(thetas, W, L)) / sig[None, :]

    with np.errstate(all="ignore"):
        res = levenberg_marquardt(residuals, theta, max_iter=max_iter)
    ok = res.converged and np.isfinite(res.chi2)
    return ok, _derived(model, res.theta, int(L.min()))


def confidence(result: FitResult, data, n_resamples: int = 200, seed: int = 0, workers: int = 1,
               level: float = 0.95, max_iter: int = 200) -> dict:
    """Monte-Carlo confidence intervals by refitting synthetic datasets.

    Each synthetic dataset adds Gaussian noise of the reported errors to the
    fitted curve; it is refitted from the fitted parameters. The intervals
    are the central percentiles of the refitted values. More than 5%
    non-convergent refits mark the intervals unreliable.
    """
    if n_resamples < 1:
        result.warnings.append("no resamples: point estimates only")
        result.ci = {}
        result.ci_reliable = None
        return {}
    points = [p if isinstance(p, DataPoint) else DataPoint(*p) for p in data]
    pts, W, L, lam, sig = _canonical(points)
    wc0, window = result.window
    if math.isfinite(window):
        keep = np.abs(W - wc0) / abs(wc0) <= window + 1e-12
        W, L, sig = W[keep], L[keep], sig[keep]
    tasks = [(result.order, result.theta, W, L, sig, [seed, k], max_iter) for k in range(n_resamples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_refit_task, tasks, chunksize=max(1, n_resamples // (4 * workers))))
    else:
        outcomes = [_refit_task(t) for t in tasks]
    failed = sum(1 for ok, _ in outcomes if not ok)
    values = {k: np.array([v[k] for _, v in outcomes]) for k in outcomes[0][1]}
    lo, hi = 50 * (1 - level), 50 * (1 + level)
    ci = {k: (float(np.percentile(v, lo)), float(np.percentile(v, hi))) for k, v in values.items()}
    result.ci = ci
    result.n_resamples = n_resamples
    result.ci_reliable = failed <= 0.05 * n_resamples
    if not result.ci_reliable:
        result.warnings.append(f"{failed} of {n_resamples} refits did not converge; intervals unreliable")
    return ci


def intervals_overlap(a: tuple, b: tuple) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


@dataclass
class StabilityReport:
    """Fits over several expansion orders and size windows with their pairwise drifts."""

    fits: list
    labels: list
    drift: dict
    stable: bool

    def to_dict(self) -> dict:
        return {"labels": self.labels, "fits": [f.to_dict() for f in self.fits],
                "drift": self.drift, "stable": self.stable}


def order_stability(data, orders, n_resamples: int = 0, seed: int = 0, drop_smallest: int = 0,
                    workers: int = 1, **fit_kwargs) -> StabilityReport:
    """Compare fits across expansion orders and, optionally, truncated size windows.

    A comparison is stable when, for every pair of fits and every shared
    parameter, the 95% intervals overlap. Monte-Carlo intervals are used when
    ``n_resamples > 0``; covariance intervals otherwise.
    """
    orders = [ExpansionOrder.parse(o) for o in orders]
    if len(orders) < 2 and drop_smallest == 0:
        raise ValueError("need at least two orders to compare")
    points = [p if isinstance(p, DataPoint) else DataPoint(*p) for p in data]
    sizes = sorted({p.L for p in points})
    variants = [(o, 0) for o in orders] + [(o, k) for o in orders for k in range(1, drop_smallest + 1)]
    fits, labels = [], []
    for o, k in variants:
        subset = [p for p in points if p.L >= sizes[k]]
        f = fit(subset, o, **fit_kwargs)
        if n_resamples > 0:
            confidence(f, subset, n_resamples, seed, workers=workers)
        fits.append(f)
        labels.append(f"{o} L>={sizes[k]}")
    drift = {}
    stable = True
    for i in range(len(fits)):
        for j in range(i + 1, len(fits)):
            fi, fj = fits[i], fits[j]
            key = f"{labels[i]} vs {labels[j]}"
            entry = {}
            for name in ("W_c", "nu", "y", "lambda_c"):
                vi, vj = fi.value(name), fj.value(name)
                if vi is None or vj is None:
                    continue
                ci_i = fi.ci.get(name) or fi.ci_covariance.get(name)
                ci_j = fj.ci.get(name) or fj.ci_covariance.get(name)
                overlap = bool(ci_i and ci_j and intervals_overlap(ci_i, ci_j))
                entry[name] = {"difference": vj - vi, "overlap": overlap}
                stable = stable and overlap
            drift[key] = entry
    return StabilityReport(fits, labels, drift, stable)


# --------------------------------------------------------------------- reporting
def decimals_for(interval: tuple | None, default: int = 4) -> int:
    """Decimal places that resolve a confidence interval (two significant digits of its width)."""
    if not interval:
        return default
    width = abs(interval[1] - interval[0])
    if not width > 0 or not math.isfinite(width):
        return default
    return int(min(6, max(2, math.ceil(-math.log10(width)) + 1)))


def format_value(value, interval: tuple | None = None) -> str:
    """``value[lo, hi]`` with a precision matched to the interval, or ``-`` when absent."""
    if value is None:
        return "-"
    d = decimals_for(interval)
    if interval:
        return f"{value:.{d}f}[{interval[0]:.{d}f}, {interval[1]:.{d}f}]"
    return f"{value:.{d}f}"


def report_row(report: dict) -> str:
    """Table row ``class | E | L-range | (m1,n1,m2,n2) | GOF | W_c | ν | y | Λ_c``.

    ``report`` is the JSON dictionary of a fit, optionally carrying ``class``
    and ``energy``. Raises ``KeyError`` for missing fields.
    """
    required = ("order", "W_c", "nu", "y", "lambda_c", "gof", "L_range")
    missing = [k for k in required if k not in report]
    if missing:
        raise KeyError(f"fit report lacks fields: {', '.join(missing)}")
    ci = report.get("ci") or {}
    cls = report.get("class", "?")
    energy = report.get("energy")
    if isinstance(energy, (list, tuple)):
        energy = complex(*energy)
    e_text = "?" if energy is None else _format_energy(complex(energy))
    lo, hi = report["L_range"]
    order = "({},{},{},{})".format(*report["order"])
    cells = [cls, e_text, f"{lo}-{hi}", order, f"{report['gof']:.2f}",
             format_value(report["W_c"], ci.get("W_c")),
             format_value(report["nu"], ci.get("nu")),
             format_value(report["y"], ci.get("y")),
             format_value(report["lambda_c"], ci.get("lambda_c"))]
    if not ci:
        warnings.warn("fit report has no confidence intervals; printing point estimates only")
    return " | ".join(cells)


def _format_energy(e: complex) -> str:
    if e.imag == 0:
        return f"{e.real:g}"
    if e.real == 0:
        return f"{e.imag:g}i"
    return f"{e.real:g}{e.imag:+g}i"
