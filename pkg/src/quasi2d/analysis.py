"""Error-term assembly, epsilon-scaling diagnostics, the weighted remainder
monitor and log-log rate regression, plus the sweep that ties them together."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import norms as nm
from .profiles import ProfileSpec, build_quasi2d_datum, default_data, slow_scale, stretched_grid
from .solvers import (ApproxTrajectory, NumericalAbort, SolverConfig, Trajectory, assemble_uapp, remainder,
                      solve_linear_teps, solve_ns2d_family, solve_ns3d, solve_remainder_direct)
from .spectral import Field, Grid, VectorField, fwd, inv, resample_coeffs, spectral_l2, upsampled_physical

CSV_SCHEMA = "quasi2d-sweep/1"
MIN_SLOPE_POINTS = 4
_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


# helpers -------------------------------------------------------------------------


def _fine(g: Grid, factor: int = 2) -> Grid:
    return Grid(g.n_h * factor, g.n_v * factor, g.len_h, g.len_v)


def _pad(c: np.ndarray, g: Grid, fine: Grid) -> np.ndarray:
    return resample_coeffs(c, g, fine)


def _div_sym(t_ij: dict, g: Grid) -> np.ndarray:
    """``sum_j d_j T_ij`` for a symmetric tensor given by its upper triangle."""
    out = np.empty((3,) + g.spectral_shape, complex)
    for i in range(3):
        out[i] = sum(1j * g.kd[j] * t_ij[tuple(sorted((i, j)))] for j in range(3))
    return out


def _hm12(c: np.ndarray, g: Grid, eps: float = 1.0) -> float:
    return math.sqrt(nm.hs_norm_sq_coeffs(c, g, -0.5, eps))


def fd_weights(i: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights of a fourth-order first-derivative stencil on unit spacing."""
    if n < 5:
        raise ValueError("need at least five samples for the time derivative")
    if 2 <= i <= n - 3:
        return np.arange(i - 2, i + 3), np.array([1, -8, 0, 8, -1]) / 12.0
    one_sided = {0: np.array([-25, 48, -36, 16, -3]) / 12.0, 1: np.array([-3, -10, 18, -6, 1]) / 12.0}
    if i < 2:
        return np.arange(5), one_sided[i]
    return np.arange(n - 5, n), -one_sided[n - 1 - i][::-1]


# the error term ------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorNorms:
    """Per-sample Hdot^{-1/2} norms of the error pieces."""

    times: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    total: np.ndarray
    residual: np.ndarray
    gap: np.ndarray

    def l2(self, name: str, horizon: float | None = None) -> float:
        vals = getattr(self, name)
        t = self.times
        if horizon is not None:
            keep = t <= horizon + 1e-12
            t, vals = t[keep], vals[keep]
        return nm.TimeSeriesNorm(t, vals, name).aggregate(2)

    def tail(self, name: str) -> float:
        return nm.TimeSeriesNorm(self.times, getattr(self, name), name).tail_estimate(2)


@dataclass(frozen=True)
class ErrorSample:
    """Error pieces at one sample, all on the twice-refined grid of ``u_app``."""

    e1: VectorField
    e2: VectorField
    total: VectorField
    residual: VectorField | None


class ErrorSplit:
    """``E = E1 + E2`` for an approximate trajectory.

    ``E2 = div(u (x) V + V (x) u)`` with ``V = [v2D]_eps`` is formed on the
    twice-refined grid of ``u``, so the products are exact. ``E1`` is the
    self-interaction error of the quasi-2D hierarchy; in unscaled variables
    it equals ``eps (w . grad) v2D - eps^2 (d3^2 v^h, 0) + eps (0, 0, d3 p0)``
    and it is relabelled only when a field on the 3D grid is requested.

    The residual form evaluates ``(d_t - Delta) u_app + div(u_app (x) u_app) +
    grad p_app`` directly, with a fourth-order difference in time of the
    integrating-factor variable over the samples. It therefore contains the
    solver and time-sampling errors as well; ``gap`` reports its distance from
    the term form.
    """

    def __init__(self, uapp: ApproxTrajectory):
        if not isinstance(uapp, ApproxTrajectory):
            raise TypeError("the error split needs the summands of u_app")
        if uapp.u.pressures is None or uapp.vh.pressures is None or uapp.w.pressures is None:
            raise ValueError("the error split needs the pressures of every summand")
        self.uapp = uapp
        self.eps = uapp.eps
        self.grid = uapp.grid
        self.fine = _fine(uapp.grid)
        self.base = uapp.base
        self.base_fine = _fine(uapp.base)
        self._window: dict[int, np.ndarray] = {}

    # term form
    def e1_unscaled(self, i: int) -> np.ndarray:
        """``E1`` in unscaled variables on the refined unscaled grid."""
        a, b, bf, eps = self.uapp, self.base, self.base_fine, self.eps
        v2d = a.v2d(i).coeffs
        w = a.w.states[i]
        wf = upsampled_physical(w, b)
        adv = np.zeros((3,) + bf.shape)
        for j in range(3):
            grad_j = upsampled_physical(1j * b.kd[j] * v2d, b)
            adv += wf[j] * grad_j
        out = eps * fwd(adv)
        vh = a.vh.state(i).coeffs
        p0 = a.vh.pressure(i).coeffs
        lin = np.zeros_like(v2d)
        lin[:2] = (eps * b.k3) ** 2 * vh[:2]
        lin[2] = eps * 1j * b.kd[2] * p0
        return out + _pad(lin, b, bf)

    def e2(self, i: int) -> np.ndarray:
        g, f = self.grid, self.fine
        u = upsampled_physical(self.uapp.u.states[i], g)
        v = upsampled_physical(self.uapp.scaled_v2d(i).coeffs, g)
        t_ij = {(p, q): fwd(u[p] * v[q] + v[p] * u[q]) for p, q in _PAIRS}
        return _div_sym(t_ij, f)

    def _e1_on_fine(self, e1u: np.ndarray) -> np.ndarray:
        return slow_scale(VectorField(self.base_fine, e1u), self.eps, self.fine).coeffs

    # residual form
    def _uapp_coeffs(self, j: int) -> np.ndarray:
        if j not in self._window:
            if len(self._window) > 8:
                self._window.pop(min(self._window))
            self._window[j] = self.uapp.state(j).coeffs
        return self._window[j]

    def residual(self, i: int) -> np.ndarray:
        a, g, f = self.uapp, self.grid, self.fine
        times = np.asarray(a.times)
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("the residual form needs uniform sampling")
        idx, wts = fd_weights(i, times.size)
        # difference exp(|k|^2 (t_j - t_i)) u_j, which varies slowly even where diffusion is stiff;
        # then d_t u - Delta u is exactly the derivative of the weighted samples at t_i
        slow_dt = sum(wt * np.exp(g.ksq * (times[int(j)] - times[i])) * self._uapp_coeffs(int(j))
                      for j, wt in zip(idx, wts) if wt != 0) / steps[0]
        c = self._uapp_coeffs(i)
        p = a.pressure(i).coeffs
        lin = slow_dt + np.stack([1j * k * p for k in g.kd])
        uf = inv(_pad(c, g, f), f)
        t_ij = {(p_, q): fwd(uf[p_] * uf[q]) for p_, q in _PAIRS}
        return _pad(lin, g, f) + _div_sym(t_ij, f)

    def sample(self, i: int, with_residual: bool = True) -> ErrorSample:
        e1 = self._e1_on_fine(self.e1_unscaled(i))
        e2 = self.e2(i)
        res = VectorField(self.fine, self.residual(i)) if with_residual else None
        return ErrorSample(VectorField(self.fine, e1), VectorField(self.fine, e2), VectorField(self.fine, e1 + e2), res)

    def norms(self, with_residual: bool = True) -> ErrorNorms:
        n = len(self.uapp)
        e1n, e2n, tot, resn, gap = (np.zeros(n) for _ in range(5))
        for i in range(n):
            e1u = self.e1_unscaled(i)
            e1n[i] = _hm12(e1u, self.base_fine, self.eps)
            e2 = self.e2(i)
            e2n[i] = _hm12(e2, self.fine)
            total = self._e1_on_fine(e1u) + e2
            tot[i] = _hm12(total, self.fine)
            if with_residual:
                r = self.residual(i)
                resn[i] = _hm12(r, self.fine)
                gap[i] = _hm12(r - total, self.fine)
        if not with_residual:
            resn[:] = np.nan
            gap[:] = np.nan
        return ErrorNorms(np.asarray(self.uapp.times), e1n, e2n, tot, resn, gap)


def compute_error_term(uapp: ApproxTrajectory) -> ErrorSplit:
    return ErrorSplit(uapp)


# traces, F_eps and the monitor --------------------------------------------------------


@dataclass(frozen=True)
class TraceReport:
    """Size of ``v2D`` on the plane ``x3 = 0`` and uniform norms of ``v2D``."""

    linf_l2: float
    grad_l2_l2: float
    h12_sup: float
    h32_l2: float

    @property
    def total(self) -> float:
        return self.linf_l2 + self.grad_l2_l2


def _v2d_coeffs(vh_traj: Trajectory, w_traj: Trajectory, eps: float, i: int) -> np.ndarray:
    return vh_traj.state(i).coeffs + w_traj.states[i] * np.array([eps, eps, 1.0])[:, None, None, None]


def smallatzero_check(vh_traj: Trajectory, w_traj: Trajectory, eps: float) -> TraceReport:
    """``||v2D(., 0)||_{L^inf_t L^2_h} + ||grad_h v2D(., 0)||_{L^2_t L^2_h}`` and the
    ``L^inf_t Hdot^{1/2}``, ``L^2_t Hdot^{3/2}`` norms of ``v2D`` in unscaled variables."""
    g = w_traj.grid
    times = np.asarray(w_traj.times)
    l2 = np.empty(times.size)
    grad = np.empty(times.size)
    h12 = np.empty(times.size)
    h32 = np.empty(times.size)
    for i in range(times.size):
        c = _v2d_coeffs(vh_traj, w_traj, eps, i)
        plane = nm.plane_at_zero(VectorField(g, c))
        l2[i] = nm.plane_norm_l2(plane, g)
        grad[i] = nm.plane_hs(plane, g, 1.0)
        h12[i] = math.sqrt(nm.hs_norm_sq_coeffs(c, g, 0.5))
        h32[i] = math.sqrt(nm.hs_norm_sq_coeffs(c, g, 1.5))
    return TraceReport(float(l2.max()), nm.TimeSeriesNorm(times, grad).aggregate(2),
                       float(h12.max()), nm.TimeSeriesNorm(times, h32).aggregate(2))


def feps_field(w_traj: Trajectory, i: int) -> np.ndarray:
    """``F = d3^2 w^3 - d3 p1`` in unscaled variables."""
    g = w_traj.grid
    return -(g.k3**2) * w_traj.states[i][2] - 1j * g.kd[2] * w_traj.pressures[i]


def feps_check(w_traj: Trajectory, p1_traj: Trajectory | None = None, eps: float | None = None) -> float:
    """``eps ||F||_{L^2_t L^inf_v Hdot^{-1/2}_h}``; pressures default to those of ``w_traj``."""
    if p1_traj is not None:
        w_traj = Trajectory(w_traj.grid, w_traj.times, w_traj.states, p1_traj.pressures)
    eps = w_traj.diagnostics.get("eps") if eps is None else eps
    if eps is None:
        raise ValueError("eps is required")
    g = w_traj.grid
    vals = np.empty(len(w_traj))
    for i in range(len(w_traj)):
        sq = nm.slice_hs_sq(Field(g, feps_field(w_traj, i)), -0.5, upsample_v=2)
        vals[i] = math.sqrt(float(np.max(sq)))
    return eps * nm.TimeSeriesNorm(np.asarray(w_traj.times), vals).aggregate(2)


def d33w3_identity_gap(w_traj: Trajectory, i: int) -> float:
    """Relative mismatch between ``d3^2 w^3`` and ``-d3 div_h w^h``."""
    g = w_traj.grid
    c = w_traj.states[i]
    lhs = -(g.k3**2) * c[2]
    rhs = -1j * g.kd[2] * (1j * g.kd[0] * c[0] + 1j * g.kd[1] * c[1])
    scale = max(spectral_l2(lhs, g), 1e-300)
    return spectral_l2(lhs - rhs, g) / scale


@dataclass(frozen=True)
class WeightedMonitor:
    """``V(t) = ||u_app||_inf^2 + ||grad u_app||_{L^inf_v L^2_h}^2``, ``U = int V`` and
    ``Rlam(t) = ||R(t)||_{Hdot^{1/2}} exp(-lam int_0^t V)``."""

    lam: float
    times: np.ndarray
    veps: np.ndarray
    U: float
    rlam: np.ndarray
    r_h12: np.ndarray
    uapp_sup: np.ndarray
    grad_uapp: np.ndarray
    C: float = 1.0

    @property
    def threshold(self) -> float:
        """``(4 C e^{C U})^{-1}``; the constant ``C`` is a user choice."""
        return 1.0 / (4 * self.C * math.exp(min(self.C * self.U, 700.0)))

    @property
    def rlam_sup(self) -> float:
        return float(np.max(self.rlam))


def uapp_regularity(uapp: ApproxTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ``||u_app||_inf`` and ``||grad u_app||_{L^inf_v L^2_h}``."""
    sup = np.empty(len(uapp))
    grad = np.empty(len(uapp))
    for i in range(len(uapp)):
        s = uapp.state(i)
        sup[i] = nm.sup_norm(s)
        grad[i] = nm.grad_linfv_l2h(s)
    return sup, grad


def weighted_remainder_monitor(r_traj, uapp: ApproxTrajectory, lam: float, C: float = 1.0,
                               regularity: tuple[np.ndarray, np.ndarray] | None = None) -> WeightedMonitor:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    times = np.asarray(uapp.times)
    if not np.allclose(times, getattr(r_traj, "times", times), atol=1e-12):
        raise ValueError("remainder and u_app samples differ")
    sup, grad = regularity if regularity is not None else uapp_regularity(uapp)
    veps = sup**2 + grad**2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (veps[1:] + veps[:-1]) * np.diff(times))])
    rh = r_traj.h12_history() if hasattr(r_traj, "h12_history") else np.asarray(r_traj)
    return WeightedMonitor(lam, times, veps, float(cum[-1]), rh * np.exp(-lam * cum), rh, sup, grad, C)


# slope fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    half_width: float
    n: int

    def at_least(self, target: float) -> bool:
        return self.slope >= target


def slope_fit(points, confidence: float = 0.95) -> SlopeFit:
    """Least squares of ``log value`` on ``log eps``; half-width from the t distribution."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("a slope fit needs at least three points")
    if any(e <= 0 or not v > 0 or not math.isfinite(v) for e, v in pts):
        raise ValueError("eps and values must be positive and finite")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    n = x.size
    xm = x - x.mean()
    sxx = float(xm @ xm)
    if sxx == 0:
        raise ValueError("eps values must not all coincide")
    slope = float(xm @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    dof = n - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    half = float(stats.t.ppf(0.5 + confidence / 2, dof) * math.sqrt(s2 / sxx)) if dof > 0 else float("inf")
    return SlopeFit(slope, intercept, half, n)


def strictly_decreasing_in_eps(eps: list[float], values: list[float]) -> bool:
    """True when the values decrease strictly as eps decreases."""
    order = np.argsort(eps)[::-1]
    v = np.asarray(values, float)[order]
    return bool(np.all(np.diff(v) < 0))


# the sweep --------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs; the unscaled box is ``n_h^2 x n_v`` of size ``len_h^2 x len_v``."""

    n_h: int = 48
    n_v: int = 32
    len_h: float = 2 * np.pi * 8
    len_v: float = 2 * np.pi
    tall_factor: int = 8
    tall_cap: int = 192
    eps_list: tuple[float, ...] = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
    solver: SolverConfig = SolverConfig()
    profile: ProfileSpec = ProfileSpec()
    lam: float = 1.0
    monitor_C: float = 1.0
    seed: int = 0
    residual_form: bool = True
    direct_check: bool = False
    refine_on_failure: bool = True
    box_check: bool = False
    box_factor: float = 0.75
    workers: int = 1

    def __post_init__(self):
        eps = list(self.eps_list)
        if not eps:
            raise ValueError("eps_list is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        for e in eps:
            stretched_grid(self.base_grid(), e)
            if self.tall_n_v(e) < self.n_v:
                raise ValueError(f"the 3D grid for eps={e} has fewer vertical points than the unscaled grid")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def base_grid(self) -> Grid:
        return Grid(self.n_h, self.n_v, self.len_h, self.len_v)

    def tall_n_v(self, eps: float) -> int:
        return int(min(round(self.tall_factor / eps), self.tall_cap))

    def tall_grid(self, eps: float) -> Grid:
        return stretched_grid(self.base_grid(), eps, self.tall_n_v(eps))

    def refined(self) -> "SweepConfig":
        return replace(self, n_h=self.n_h * 3 // 2 if (self.n_h * 3 // 2) % 2 == 0 else self.n_h * 2,
                       refine_on_failure=False)

    def box_variant(self) -> "SweepConfig":
        """Same resolution per unit length on a horizontally smaller box."""
        n_h = int(round(self.n_h * self.box_factor))
        return replace(self, n_h=n_h + n_h % 2, len_h=self.len_h * self.box_factor,
                       box_check=False, refine_on_failure=False)

    def canonical(self) -> str:
        d = asdict(self)
        d["eps_list"] = [repr(float(e)) for e in self.eps_list]
        d.pop("workers")
        return json.dumps(d, sort_keys=True, default=repr)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


@dataclass
class MemberResult:
    """Scalar outcomes of one epsilon."""

    eps: float
    values: dict = field(default_factory=dict)
    error: str | None = None


def _run_member(cfg: SweepConfig, eps: float, vh_traj: Trajectory) -> MemberResult:
    res = MemberResult(eps)
    try:
        base, tall = cfg.base_grid(), cfg.tall_grid(eps)
        data = default_data(base, tall, eps, cfg.profile)
        w = solve_linear_teps(data.w0, vh_traj, eps, cfg.solver)
        u = solve_ns3d(data.u0, cfg.solver)
        u_eps = solve_ns3d(build_quasi2d_datum(data), cfg.solver, store_pressure=False)
        uapp = assemble_uapp(u, vh_traj, w, eps)
        r = remainder(u_eps, uapp)
        en = ErrorSplit(uapp).norms(with_residual=cfg.residual_form)
        trace = smallatzero_check(vh_traj, w, eps)
        reg = uapp_regularity(uapp)
        mon = weighted_remainder_monitor(r, uapp, cfg.lam, cfg.monitor_C, reg)
        times = np.asarray(uapp.times)
        half = cfg.solver.horizon / 2
        v = res.values
        v.update(
            E1=en.l2("e1"), E2=en.l2("e2"), E_total=en.l2("total"),
            E_total_half_horizon=en.l2("total", half), E_total_tail=en.tail("total"),
            E_residual=en.l2("residual"), solver_gap=en.l2("gap"),
            trace=trace.total, trace_linf_l2=trace.linf_l2, trace_grad_l2=trace.grad_l2_l2,
            v2d_h12_sup=trace.h12_sup, v2d_h32_l2=trace.h32_l2,
            F_eps=feps_check(w, eps=eps),
            R_sup=float(np.max(mon.r_h12)), R0=r.initial_norm(),
            uapp_linf_l2=nm.TimeSeriesNorm(times, reg[0]).aggregate(2),
            grad_uapp_l2=nm.TimeSeriesNorm(times, reg[1]).aggregate(2),
            U=mon.U, Rlam_sup=mon.rlam_sup, threshold=mon.threshold,
            energy_balance_u=u.diagnostics["energy_balance"],
            energy_balance_ueps=u_eps.diagnostics["energy_balance"],
            divergence_max=float(max(u.diagnostics["divergence"].max(), u_eps.diagnostics["divergence"].max(),
                                     w.diagnostics["divergence"].max())),
            uapp_divergence_max=float(uapp.divergence_residuals().max()),
            pressure_residual_max=float(w.diagnostics["pressure_residual"].max()),
        )
        if cfg.direct_check:
            rd = solve_remainder_direct(data.u0, data.v0h, data.w0, eps, cfg.solver)
            hd = np.array([math.sqrt(nm.hs_norm_sq_coeffs(rd.states[i], tall, 0.5)) for i in range(len(rd))])
            v["direct_discrepancy"] = float(np.max(np.abs(hd - mon.r_h12)))
    except NumericalAbort as exc:
        res.error = f"numerical abort: {exc}"
    return res


@dataclass
class SweepReport:
    config: SweepConfig
    members: list[MemberResult]
    slopes: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    refined: "SweepReport | None" = None
    box: "SweepReport | None" = None

    @property
    def eps_list(self) -> list[float]:
        return [m.eps for m in self.members]

    @property
    def complete(self) -> bool:
        return all(m.error is None for m in self.members)

    def series(self, name: str) -> list[float]:
        return [m.values[name] for m in self.members]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {CSV_SCHEMA}\n# config: {self.config.digest()}\n# seed: {self.config.seed}\n")
        if not self.complete:
            buf.write("# status: incomplete\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["eps", "norm", "value", "slope_group"])
        groups = {k: k for k in self.slopes}
        for m in self.members:
            for name in sorted(m.values):
                wr.writerow([repr(m.eps), name, repr(float(m.values[name])), groups.get(name, "")])
            if m.error:
                wr.writerow([repr(m.eps), "error", m.error, ""])
        for name in sorted(self.slopes):
            s = self.slopes[name]
            wr.writerow(["", f"slope:{name}", repr(s.slope), name])
            wr.writerow(["", f"slope_half_width:{name}", repr(s.half_width), name])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"sweep {self.config.digest()} seed {self.config.seed}",
                 "eps list: " + ", ".join(f"{e:g}" for e in self.eps_list)]
        for m in self.members:
            if m.error:
                lines.append(f"  eps={m.eps:g}: {m.error}")
                continue
            v = m.values
            lines.append(f"  eps={m.eps:g}: |E|={v['E_total']:.4e} |E1|={v['E1']:.4e} |E2|={v['E2']:.4e} "
                         f"gap={v.get('solver_gap', float('nan')):.2e} trace={v['trace']:.4e} "
                         f"sup|R|={v['R_sup']:.4e} threshold={v['threshold']:.3e}")
        for name, s in sorted(self.slopes.items()):
            lines.append(f"slope {name}: {s.slope:.4f} +/- {s.half_width:.4f}")
        for name, ok in self.verdicts.items():
            lines.append(f"{'PASS' if ok else 'FAIL'} {name}")
        if self.refined is not None:
            lines.append("refined re-run:")
            lines.extend("  " + ln for ln in self.refined.summary().splitlines())
        if self.box is not None:
            lines.append(f"box-size sensitivity (len_h x {self.config.box_factor:g}):")
            for e, d in self.box_sensitivity().items():
                lines.append(f"  eps={e:g}: relative change of |E| {d:.3e}")
            lines.extend("  " + ln for ln in self.box.summary().splitlines())
        return "\n".join(lines)

    def box_sensitivity(self) -> dict[float, float]:
        """Relative change of ``E_total`` between the two box sizes, per eps."""
        if self.box is None or not (self.complete and self.box.complete):
            return {}
        return {m.eps: abs(b.values["E_total"] - m.values["E_total"]) / m.values["E_total"]
                for m, b in zip(self.members, self.box.members)}

    def evaluate(self):
        self.slopes.clear()
        self.verdicts.clear()
        if not self.complete:
            self.verdicts["complete"] = False
            return
        eps = self.eps_list
        if len(eps) >= MIN_SLOPE_POINTS:
            for name in ("E1", "E2", "E_total", "trace", "R_sup"):
                vals = self.series(name)
                if all(v > 0 for v in vals):
                    self.slopes[name] = slope_fit(zip(eps, vals))
        self.verdicts["E_total strictly decreasing"] = strictly_decreasing_in_eps(eps, self.series("E_total"))
        if "E1" in self.slopes:
            self.verdicts["slope E1 >= 0.30"] = self.slopes["E1"].slope >= 0.30
        if "trace" in self.slopes:
            self.verdicts["slope trace >= 0.45"] = self.slopes["trace"].slope >= 0.45
        self.verdicts["sup R decreasing"] = strictly_decreasing_in_eps(eps, self.series("R_sup"))
        self.verdicts["R(0) < 1e-10"] = max(self.series("R0")) < 1e-10
        self.verdicts["sup Rlam decreasing"] = strictly_decreasing_in_eps(eps, self.series("Rlam_sup"))
        for name in ("uapp_linf_l2", "grad_uapp_l2", "v2d_h12_sup"):
            vals = self.series(name)
            self.verdicts[f"{name} varies < 10%"] = max(vals) / min(vals) - 1 < 0.10
        f = self.series("F_eps")
        self.verdicts["eps F bounded (max <= 2 x first)"] = max(f) <= 2 * f[0]
        self.verdicts["energy balance < 1e-3"] = max(self.series("energy_balance_u") + self.series("energy_balance_ueps")) < 1e-3
        self.verdicts["divergence < 1e-8"] = max(self.series("divergence_max") + self.series("uapp_divergence_max")) < 1e-8
        self.verdicts["pressure residual < 1e-8"] = max(self.series("pressure_residual_max")) < 1e-8

    @property
    def passed(self) -> bool:
        return self.complete and all(self.verdicts.values())


def solve_family(cfg: SweepConfig) -> Trajectory:
    """The horizontal plane family does not depend on eps; solve it once per sweep."""
    data = default_data(cfg.base_grid(), cfg.tall_grid(cfg.eps_list[0]), cfg.eps_list[0], cfg.profile)
    return solve_ns2d_family(data.v0h, cfg.solver)


def error_scaling_sweep(cfg: SweepConfig, progress=None) -> SweepReport:
    """Run the full pipeline for every eps and evaluate the scaling verdicts.

    Slopes are fitted only with at least ``MIN_SLOPE_POINTS`` eps values; shorter
    lists still produce per-eps rows. If ``E_total`` fails to decrease, the sweep
    is repeated once with a finer horizontal grid and attached as ``refined``.
    """
    members = _run_members(cfg, progress)
    report = SweepReport(cfg, members)
    report.evaluate()
    if (cfg.refine_on_failure and report.complete
            and not report.verdicts.get("E_total strictly decreasing", True)):
        report.refined = error_scaling_sweep(cfg.refined(), progress)
    if cfg.box_check:
        report.box = error_scaling_sweep(cfg.box_variant(), progress)
    return report


def _run_members(cfg: SweepConfig, progress=None) -> list[MemberResult]:
    try:
        vh = solve_family(cfg)
    except NumericalAbort as exc:
        return [MemberResult(e, error=f"numerical abort: {exc}") for e in cfg.eps_list]
    if cfg.workers == 1:
        out = []
        for e in cfg.eps_list:
            out.append(_run_member(cfg, e, vh))
            if progress:
                progress(e)
        return out
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_run_member, cfg, e, vh) for e in cfg.eps_list]
        return [f.result() for f in futures]


def run_single(cfg: SweepConfig, eps: float) -> MemberResult:
    """One member of a sweep, for quick runs and the ``solve`` command."""
    return _run_member(cfg, eps, solve_family(cfg))
