"""Scripted experiments: closed-form oscillator reference, canonical-weight
emergence from a microcanonical bath, the zeroth law, and the evolution law
for ensemble averages.

Every experiment returns a self-contained ExperimentReport: echoed inputs,
named outputs, named pass/fail checks with explicit tolerances, and
plot-ready tables. Reports are bit-reproducible from (inputs, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import canonical as _canonical
from . import microcanonical as _micro
from ._kernels import rk4_advect
from .errors import (EmptyShellError, FitError, PreconditionError,
                     UndefinedEntropyError)
from .model import Observable, PotentialSpec, SystemSpec, UnitsConfig


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    target: float
    tolerance: float

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "value": self.value, "target": self.target,
                "tolerance": self.tolerance}


@dataclass
class ExperimentReport:
    name: str
    inputs: dict
    outputs: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    seed: int | None = None
    tables: dict = field(default_factory=dict)

    def add_check(self, name: str, value: float, target: float,
                  tolerance: float) -> bool:
        ok = abs(value - target) <= tolerance
        self.checks.append(CheckResult(name=name, passed=ok, value=float(value),
                                       target=float(target),
                                       tolerance=float(tolerance)))
        return ok

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "seed": self.seed, "inputs": self.inputs,
                "outputs": self.outputs,
                "checks": [c.to_dict() for c in self.checks],
                "passed": self.passed, "tables": self.tables}


@dataclass(frozen=True)
class CloudSpec:
    """Initial sample cloud: equilibrium (canonical) or a displaced blob."""

    kind: str
    beta: float | None = None
    mean: float = 0.0
    scale: float = 0.1

    @classmethod
    def canonical(cls, beta: float) -> "CloudSpec":
        return cls(kind="canonical", beta=float(beta))

    @classmethod
    def shifted_gaussian(cls, mean: float, scale: float) -> "CloudSpec":
        if not (math.isfinite(scale) and scale > 0):
            raise PreconditionError("cloud scale must be positive")
        return cls(kind="shifted_gaussian", mean=float(mean), scale=float(scale))


def ho_reference(omega: float = 1.0, beta: float = 1.0, U: float = 1.0,
                 units: UnitsConfig | None = None) -> ExperimentReport:
    """Closed-form harmonic-oscillator ensemble table versus the toolkit.

    Closed forms (d = 1): Omega(U) = U/(hbar omega), Sigma = 1/(hbar omega),
    S = kB ln Omega, T = U/kB, Z = kB T/(hbar omega), U_canonical = kB T.
    """
    if not (omega > 0 and beta > 0 and U >= 0):
        raise PreconditionError("omega, beta must be positive; U >= 0")
    units = units or UnitsConfig()
    system = SystemSpec(dof=1, potential=PotentialSpec.harmonic(omega),
                        units=units, label="ho-reference")
    hbar_o = units.hbar * omega
    report = ExperimentReport(
        name="ho_reference",
        inputs={"omega": omega, "beta": beta, "U": U,
                "hbar": units.hbar, "kB": units.kB})
    rows = []

    def record(qty, closed, computed, tol):
        report.outputs[f"{qty}_closed_form"] = closed
        report.outputs[f"{qty}_computed"] = computed
        report.add_check(qty, computed, closed, tol)
        rows.append([qty, closed, computed, abs(computed - closed), tol])

    try:
        omega_num = _micro.volume_below(system, U, method="quadrature").omega
        sigma_num = _micro.shell_density(system, U, epsilon=1e-3,
                                         method="quadrature").sigma
        s_num = _micro.entropy_micro(system, U, method="quadrature").S
        t_num = _micro.temperature_micro(system, U, dU=1e-4,
                                         method="quadrature").T
        record("omega_micro", U / hbar_o, omega_num, 1e-6)
        record("sigma", 1.0 / hbar_o, sigma_num, 1e-4)
        record("entropy", units.kB * math.log(U / hbar_o), s_num, 1e-6)
        record("temperature_micro", U / units.kB, t_num, 1e-5)
        report.outputs["microcanonical"] = "ok"
    except (EmptyShellError, UndefinedEntropyError) as exc:
        report.outputs["microcanonical"] = "empty-shell"
        report.outputs["microcanonical_detail"] = str(exc)

    thermo = _canonical.thermodynamics(system, beta, method="quadrature")
    record("Z", 1.0 / (beta * hbar_o), thermo.Z, 1e-6)
    record("U_canonical", 1.0 / beta, thermo.U, 1e-4)
    record("F", -math.log(1.0 / (beta * hbar_o)) / beta, thermo.F, 1e-4)
    record("S_canonical", units.kB * (1.0 + math.log(1.0 / (beta * hbar_o))),
           thermo.S, 1e-4)
    report.tables["reference"] = {
        "columns": ["quantity", "closed_form", "computed", "abs_error",
                    "tolerance"],
        "rows": rows}
    return report


def bath_emergence(n_bath: int, E_total: float, n_samples: int,
                   n_bins: int = 60, seed: int = 0) -> ExperimentReport:
    """Exponential energy weight of one tagged oscillator in a finite bath.

    One tagged plus n_bath harmonic coordinates (omega = 1) share total
    energy E_total. The composite shell is a sphere of radius
    sqrt(2 E_total) in 2(n_bath+1) dimensions and is sampled exactly with
    normalized Gaussian directions. ln(histogram of the tagged energy) is
    fit by count-weighted least squares over bins holding >= 50 samples and
    lying below twice the equipartition mean (the exponential form only
    holds for E1 << E_total); the slope estimates -beta_hat against
    beta_th = n_bath / E_total (the bath's d ln Omega / dE with
    Omega ~ E^n_bath).
    """
    if n_bath < 10:
        raise PreconditionError("need n_bath >= 10")
    if not E_total > 0:
        raise PreconditionError("E_total must be positive")
    if n_samples < 100:
        raise PreconditionError("need n_samples >= 100")
    if n_bins < 4:
        raise PreconditionError("need n_bins >= 4")
    rng = np.random.default_rng([seed, 0])
    n_coords = 2 * (n_bath + 1)
    radius = math.sqrt(2.0 * E_total)
    g = rng.standard_normal((int(n_samples), n_coords))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    tagged = radius * g[:, :2]
    e1 = 0.5 * np.sum(tagged * tagged, axis=1)

    counts, edges = np.histogram(e1, bins=int(n_bins))
    centers = 0.5 * (edges[:-1] + edges[1:])
    e_cap = 2.0 * E_total / (n_bath + 1)
    mask = (counts >= 50) & (centers <= e_cap)
    if int(mask.sum()) < 3:
        raise FitError(f"only {int(mask.sum())} usable bins (>= 50 samples, "
                       f"center <= {e_cap:.3g}); increase n_samples or n_bins")
    e_fit = centers[mask]
    y = np.log(counts[mask].astype(float))
    w = np.sqrt(counts[mask].astype(float))  # ~1/sigma of ln(count)
    design = np.column_stack([np.ones_like(e_fit), e_fit])
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    beta_hat = -float(coef[1])
    beta_th = n_bath / E_total

    report = ExperimentReport(
        name="bath_emergence", seed=seed,
        inputs={"n_bath": n_bath, "E_total": E_total, "n_samples": int(n_samples),
                "n_bins": int(n_bins), "seed": seed})
    report.outputs.update({
        "beta_hat": beta_hat, "beta_theory": beta_th,
        "relative_error": abs(beta_hat / beta_th - 1.0),
        "n_fit_bins": int(mask.sum()),
        "fit_range": [float(e_fit[0]), float(e_fit[-1])],
        "histogram_mass": int(counts.sum())})
    report.add_check("beta_ratio", beta_hat / beta_th, 1.0, 0.05)
    report.add_check("histogram_mass", float(counts.sum()), float(n_samples), 0.0)
    report.tables["histogram"] = {
        "columns": ["bin_center", "count"],
        "rows": [[float(c), int(k)] for c, k in zip(centers, counts)]}
    return report


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Golden-section maximizer of f on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def zeroth_law_contact(n1: int, n2: int, U_total: float,
                       grid: int = 201,
                       units: UnitsConfig | None = None) -> ExperimentReport:
    """Equal-temperature equilibrium of two harmonic collections in contact.

    With Omega_i(U) = (U/(hbar omega))^n_i / n_i!, the total entropy
    S1(U1) + S2(U_total - U1) is maximized over a grid, polished by
    golden section, then sharpened by bisection on the entropy-derivative
    difference (golden section alone stalls near sqrt(machine epsilon)
    because the entropy is flat at its maximum).
    """
    if not (isinstance(n1, int) and isinstance(n2, int) and n1 >= 1 and n2 >= 1):
        raise PreconditionError("n1, n2 must be integers >= 1")
    if not U_total > 0:
        raise PreconditionError("U_total must be positive")
    if grid < 3:
        raise PreconditionError("degenerate grid: need grid >= 3")
    units = units or UnitsConfig()
    kB = units.kB
    log_norm1 = -math.lgamma(n1 + 1) - n1 * math.log(units.hbar)
    log_norm2 = -math.lgamma(n2 + 1) - n2 * math.log(units.hbar)

    def s_total(u1: float) -> float:
        return kB * (n1 * math.log(u1) + log_norm1
                     + n2 * math.log(U_total - u1) + log_norm2)

    eps = 1e-9 * U_total
    u_grid = np.linspace(eps, U_total - eps, int(grid))
    s_grid = np.array([s_total(float(u)) for u in u_grid])
    best = int(np.argmax(s_grid))
    lo = float(u_grid[max(best - 1, 0)])
    hi = float(u_grid[min(best + 1, len(u_grid) - 1)])
    u1 = _golden_section(s_total, lo, hi, tol=1e-10 * U_total)

    def ds(u1v: float) -> float:
        return n1 / u1v - n2 / (U_total - u1v)

    a, b = lo, hi
    if ds(a) > 0 > ds(b):
        for _ in range(200):
            mid = 0.5 * (a + b)
            if ds(mid) > 0:
                a = mid
            else:
                b = mid
            if b - a <= 4.0 * math.ulp(mid):
                break
        u1 = 0.5 * (a + b)

    u2 = U_total - u1
    t1 = u1 / (n1 * kB)
    t2 = u2 / (n2 * kB)
    u1_closed = U_total * n1 / (n1 + n2)
    report = ExperimentReport(
        name="zeroth_law_contact",
        inputs={"n1": n1, "n2": n2, "U_total": U_total, "grid": int(grid),
                "hbar": units.hbar, "kB": units.kB})
    report.outputs.update({
        "U1_star": u1, "U2_star": u2, "T1": t1, "T2": t2,
        "U1_closed_form": u1_closed,
        "stationarity_residual": abs(ds(u1))})
    report.add_check("temperature_match", t1 / t2, 1.0, 1e-6)
    report.add_check("U1_closed_form", u1, u1_closed, 1e-9 * U_total)
    report.add_check("stationarity", abs(ds(u1)), 0.0, 1e-8)
    report.tables["entropy_scan"] = {
        "columns": ["U1", "S_total"],
        "rows": [[float(u), float(s)] for u, s in zip(u_grid, s_grid)]}
    return report


def _partials_samples(q_obs: Observable, qts: np.ndarray, qs: np.ndarray,
                      system: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """(dQ/dqtilde, dQ/dq) on sample arrays (K, d)."""
    k, d = qs.shape
    kind = q_obs.kind
    dqt = np.zeros((k, d))
    dq = np.zeros((k, d))
    if kind == "energy":
        dqt[:] = qts
        dq[:] = system.potential.derivative(qs)
    elif kind == "kinetic":
        dqt[:] = qts
    elif kind == "potential":
        dq[:] = system.potential.derivative(qs)
    elif kind == "coordinate":
        dq[:, q_obs.index] = 1.0
    elif kind == "velocity":
        dqt[:, q_obs.index] = 1.0
    elif kind == "lagrangian":
        dqt[:] = -qts
        dq[:] = -system.potential.derivative(qs)
    elif kind == "monomial":
        for i, p in enumerate(q_obs.q_powers):
            if p:
                term = p * qs[:, i] ** (p - 1)
                for j, pj in enumerate(q_obs.q_powers):
                    if j != i and pj:
                        term = term * qs[:, j] ** pj
                for j, pj in enumerate(q_obs.qt_powers):
                    if pj:
                        term = term * qts[:, j] ** pj
                dq[:, i] = term
        for i, p in enumerate(q_obs.qt_powers):
            if p:
                term = p * qts[:, i] ** (p - 1)
                for j, pj in enumerate(q_obs.q_powers):
                    if pj:
                        term = term * qs[:, j] ** pj
                for j, pj in enumerate(q_obs.qt_powers):
                    if j != i and pj:
                        term = term * qts[:, j] ** pj
                dqt[:, i] = term
    else:
        from .model import TangentPoint
        for i in range(k):
            a, b = q_obs.partials(TangentPoint(q=qs[i], qtilde=qts[i]), system)
            dqt[i], dq[i] = a, b
    return dqt, dq


def _bracket_with_l_samples(q_obs: Observable, qts: np.ndarray, qs: np.ndarray,
                            system: SystemSpec) -> np.ndarray:
    """{Q, L} per sample: sum_i dQ/dqt_i (-dV/dq_i) - dQ/dq_i (-qt_i)."""
    dqt, dq = _partials_samples(q_obs, qts, qs, system)
    grad_v = system.potential.derivative(qs)
    return np.sum(-dqt * grad_v + dq * qts, axis=1)


def _draw_cloud(system: SystemSpec, cloud: CloudSpec, n_samples: int,
                seed: int) -> tuple[np.ndarray, np.ndarray]:
    d = system.dof
    if cloud.kind == "canonical":
        if cloud.beta is None:
            raise PreconditionError("canonical cloud requires beta")
        thinning, burn_in = 10, 2000
        n_chain = burn_in + (n_samples - 1) * thinning + 1
        cfg = _canonical.ChainConfig(n_samples=n_chain, burn_in=burn_in,
                                     seed=_derive_seed(seed, 0),
                                     thinning=thinning)
        samples = _canonical.sample_canonical(system, cloud.beta, cfg)
        return samples.qtildes[:n_samples].copy(), samples.qs[:n_samples].copy()
    if cloud.kind == "shifted_gaussian":
        rng = np.random.default_rng([seed, 0])
        qt = cloud.scale * rng.standard_normal((n_samples, d))
        q = cloud.mean + cloud.scale * rng.standard_normal((n_samples, d))
        return qt, q
    raise PreconditionError(f"unknown cloud kind {cloud.kind!r}")


def _derive_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def ensemble_average_evolution(system: SystemSpec, q_obs: Observable,
                               cloud: CloudSpec, tau_end: float, dtau: float,
                               n_samples: int, seed: int,
                               n_checkpoints: int = 21) -> ExperimentReport:
    """Check d<Q>/dtau = <{Q, L}> along an advected sample cloud.

    The cloud is drawn once, every member is advected by the flow, and both
    sides are estimated from the same samples at uniformly spaced
    checkpoints: the left side by a fourth-order (5-point) central stencil
    on each member's Q history, the right side by averaging the bracket.
    Agreement is required within 3 combined standard errors at every
    interior checkpoint.
    """
    if not (tau_end > 0 and dtau > 0):
        raise PreconditionError("tau_end and dtau must be positive")
    if n_checkpoints < 7:
        raise PreconditionError("need at least 7 checkpoints for the stencil")
    if n_samples < 10:
        raise PreconditionError("need n_samples >= 10")
    kind, params = system.potential.kernel_args()
    qts, qs = _draw_cloud(system, cloud, n_samples, seed)

    n_full = max(int(round(tau_end / dtau)), n_checkpoints - 1)
    stride = max(1, int(round(n_full / (n_checkpoints - 1))))
    n_chk = n_full // stride + 1
    delta = stride * dtau

    q_hist = np.empty((n_chk, n_samples))
    b_hist = np.empty((n_chk, n_samples))
    q_cur, qt_cur = qs.copy(), qts.copy()
    for k in range(n_chk):
        if k > 0:
            q_cur, qt_cur = rk4_advect(kind, params, q_cur, qt_cur, dtau, stride)
        q_hist[k] = _canonical._eval_samples(q_obs, qt_cur, q_cur, system)
        b_hist[k] = _bracket_with_l_samples(q_obs, qt_cur, q_cur, system)

    taus = np.arange(n_chk) * delta
    report = ExperimentReport(
        name="ensemble_average_evolution", seed=seed,
        inputs={"potential": system.potential.kind, "dof": system.dof,
                "observable": q_obs.label or q_obs.kind,
                "cloud": cloud.kind, "cloud_beta": cloud.beta,
                "cloud_mean": cloud.mean, "cloud_scale": cloud.scale,
                "tau_end": tau_end, "dtau": dtau, "n_samples": n_samples,
                "n_checkpoints": int(n_chk), "seed": seed})
    rows = []
    worst = 0.0
    all_ok = True
    for k in range(2, n_chk - 2):
        deriv = (-q_hist[k + 2] + 8.0 * q_hist[k + 1]
                 - 8.0 * q_hist[k - 1] + q_hist[k - 2]) / (12.0 * delta)
        lhs = float(deriv.mean())
        rhs = float(b_hist[k].mean())
        se_l = float(deriv.std(ddof=1) / math.sqrt(n_samples))
        se_r = float(b_hist[k].std(ddof=1) / math.sqrt(n_samples))
        tol = 3.0 * math.hypot(se_l, se_r)
        ok = abs(lhs - rhs) <= tol
        all_ok &= ok
        if tol > 0:
            worst = max(worst, abs(lhs - rhs) / tol * 3.0)
        rows.append([float(taus[k]), float(q_hist[k].mean()), lhs, rhs,
                     se_l, se_r, int(ok)])
    report.outputs.update({
        "tau_grid_delta": delta, "worst_pull_sigma": worst,
        "interior_checkpoints": len(rows)})
    report.checks.append(CheckResult(
        name="bracket_identity_everywhere", passed=bool(all_ok),
        value=worst, target=0.0, tolerance=3.0))
    report.tables["evolution"] = {
        "columns": ["tau", "mean_Q", "dQ_dtau", "bracket_mean",
                    "stderr_dQ", "stderr_bracket", "within_3_sigma"],
        "rows": rows}
    return report
