"""Time integration: 3D Navier-Stokes, the slice-wise 2D family, the anisotropic
linear corrector, assembly of the approximate solution and the remainder.

Every system is written as ``du/dt = -sigma(k) u + N(u, t)`` and advanced with
the integrating-factor RK4 scheme of Lawson: the linear part is propagated
exactly by ``exp(-sigma h)`` and ``N`` is treated explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.integrate import simpson

from . import norms as nm
from .profiles import slow_scale
from .spectral import (FFT_WORKERS, Field, Grid, VectorField, aniso_pressure_coeffs, divergence_coeffs,
                       fwd, inv, leray_coeffs, spectral_l2)


class NumericalAbort(RuntimeError):
    """Raised when a run produces non-finite values or cannot satisfy the CFL bound."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.025
    horizon: float = 4.0
    cfl: float = 0.5
    sample_every: float = 0.1
    max_halvings: int = 10
    scheme: str = "ifrk4"

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if not 0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.scheme != "ifrk4":
            raise ValueError(f"unknown scheme {self.scheme!r}; only 'ifrk4' is implemented")
        r = self.sample_every / self.dt
        if r < 1 - 1e-9 or abs(r - round(r)) > 1e-9:
            raise ValueError("sample_every must be a positive multiple of dt")
        n = self.horizon / self.sample_every
        if abs(n - round(n)) > 1e-9:
            raise ValueError("horizon must be a multiple of sample_every")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_every / self.dt))

    @property
    def n_samples(self) -> int:
        return int(round(self.horizon / self.sample_every)) + 1

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.sample_every


# trajectories --------------------------------------------------------------------


@dataclass(eq=False)
class Trajectory:
    """Time samples of a vector field with optional pressures and time derivatives.

    ``layout = "spectral"`` stores 3D half-spectrum coefficients of shape
    ``(n, 3, *grid.spectral_shape)``. ``layout = "slices"`` stores horizontal
    fields plane by plane, shape ``(n, n_v, 2, n_h, n_h // 2 + 1)``, with the
    halved axis being x2; :meth:`state` converts to the 3D layout.
    """

    grid: Grid
    times: np.ndarray
    states: np.ndarray
    pressures: np.ndarray | None = None
    rates: np.ndarray | None = None
    layout: str = "spectral"
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> VectorField:
        if self.layout == "slices":
            return VectorField(self.grid, slices_to_coeffs(self.states[i], self.grid))
        return VectorField(self.grid, self.states[i])

    def pressure(self, i: int) -> Field:
        if self.pressures is None:
            raise ValueError("trajectory was run without pressures")
        if self.layout == "slices":
            return Field(self.grid, scalar_slices_to_coeffs(self.pressures[i], self.grid))
        return Field(self.grid, self.pressures[i])

    def rate(self, i: int) -> VectorField:
        if self.rates is None:
            raise ValueError("trajectory was run without rates")
        if self.layout == "slices":
            return VectorField(self.grid, slices_to_coeffs(self.rates[i], self.grid))
        return VectorField(self.grid, self.rates[i])


def slices_to_coeffs(sl: np.ndarray, grid: Grid) -> np.ndarray:
    """``(n_v, 2, n_h, n_h//2+1)`` plane spectra to 3D coefficients ``(3, ...)``."""
    phys = sfft.irfft2(sl, s=(grid.n_h, grid.n_h), norm="forward", workers=FFT_WORKERS)
    out = np.zeros((3,) + grid.spectral_shape, complex)
    out[:2] = fwd(np.moveaxis(phys, 0, -1))
    return out


def scalar_slices_to_coeffs(sl: np.ndarray, grid: Grid) -> np.ndarray:
    phys = sfft.irfft2(sl, s=(grid.n_h, grid.n_h), norm="forward", workers=FFT_WORKERS)
    return fwd(np.moveaxis(phys, 0, -1))


def coeffs_to_slices(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Horizontal components of 3D coefficients to plane spectra."""
    phys = inv(c[:2], grid)
    return sfft.rfft2(np.moveaxis(phys, -1, 0), norm="forward", workers=FFT_WORKERS)


def plane_spectra_physical(sl: np.ndarray, grid: Grid) -> np.ndarray:
    """Plane spectra ``(..., n_v, 2, n_h, n_h//2+1)`` to physical ``(2, n_h, n_h, n_v)``."""
    phys = sfft.irfft2(sl, s=(grid.n_h, grid.n_h), norm="forward", workers=FFT_WORKERS)
    return np.moveaxis(phys, 0, -1)


# the stepper ------------------------------------------------------------------------


def ifrk4_step(y: Sequence[np.ndarray], t: float, h: float, rhs: Callable, decay: Callable,
               k1: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """One Lawson RK4 step for a tuple of states with diagonal linear parts.

    ``decay(tau)`` returns the multipliers ``exp(-sigma tau)`` per state.
    """
    e_half, e_full = decay(h / 2), decay(h)
    k1 = rhs(y, t) if k1 is None else k1
    y2 = [e * (a + 0.5 * h * b) for e, a, b in zip(e_half, y, k1)]
    k2 = rhs(y2, t + h / 2)
    y3 = [e * a + 0.5 * h * b for e, a, b in zip(e_half, y, k2)]
    k3 = rhs(y3, t + h / 2)
    y4 = [ef * a + h * eh * b for ef, eh, a, b in zip(e_full, e_half, y, k3)]
    k4 = rhs(y4, t + h)
    return [ef * a + (h / 6) * (ef * b1 + 2 * eh * (b2 + b3) + b4)
            for ef, eh, a, b1, b2, b3, b4 in zip(e_full, e_half, y, k1, k2, k3, k4)]


def _check_finite(arrs, where: str):
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise NumericalAbort(f"non-finite values in {where}")


class _Runner:
    """Shared sample/step loop with CFL-driven step halving."""

    def __init__(self, cfg: SolverConfig, rhs, decay, speed, dx: float):
        self.cfg, self.rhs, self.decay, self.speed, self.dx = cfg, rhs, decay, speed, dx
        self.halvings = 0
        self.step_hook = None

    def run(self, y0: list[np.ndarray], on_sample: Callable[[int, float, list], None]):
        cfg = self.cfg
        y = [a.copy() for a in y0]
        t = 0.0
        on_sample(0, t, y)
        substeps = 1
        for n in range(1, cfg.n_samples):
            target = n * cfg.sample_every
            steps_left = cfg.steps_per_sample * substeps
            while steps_left > 0:
                h = cfg.dt / substeps
                k1 = self.rhs(y, t)
                _check_finite(k1, "nonlinear term")
                vmax = self.speed()
                while vmax * h > cfg.cfl * self.dx:
                    if self.halvings >= cfg.max_halvings:
                        raise NumericalAbort(
                            f"CFL bound violated at t={t:.4g} after {self.halvings} halvings "
                            f"(max speed {vmax:.3g}, dx {self.dx:.3g})")
                    self.halvings += 1
                    substeps *= 2
                    steps_left *= 2
                    h = cfg.dt / substeps
                y = ifrk4_step(y, t, h, self.rhs, self.decay, k1)
                _check_finite(y, "state")
                steps_left -= 1
                t = target - steps_left * h
                if self.step_hook is not None:
                    self.step_hook(t, y)
            t = target
            on_sample(n, t, y)


# 3D Navier-Stokes --------------------------------------------------------------


class NS3DOperator:
    """Pseudo-spectral ``N(u) = -P div(u (x) u)`` with two-thirds dealiasing."""

    PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

    def __init__(self, grid: Grid):
        self.grid = grid
        self.last_speed = 0.0

    def products(self, c: np.ndarray) -> dict:
        u = inv(c, self.grid)
        self.last_speed = float(np.sqrt(np.max(np.sum(u**2, axis=0))))
        return {(i, j): fwd(u[i] * u[j]) for i, j in self.PAIRS}

    def flux_divergence(self, t_ij: dict) -> np.ndarray:
        kd = self.grid.kd
        out = np.empty((3,) + self.grid.spectral_shape, complex)
        for i in range(3):
            out[i] = -1j * sum(kd[j] * t_ij[tuple(sorted((i, j)))] for j in range(3))
        return out

    def __call__(self, c: np.ndarray) -> np.ndarray:
        return leray_coeffs(self.flux_divergence(self.products(c)), self.grid) * self.grid.dealias_mask

    def pressure(self, c: np.ndarray) -> np.ndarray:
        """``p`` with ``-Delta p = div div (u (x) u)``, i.e. ``p = -k_i k_j (u_i u_j)^ / |k|^2``."""
        t_ij = self.products(c)
        kd = self.grid.kd
        k2 = kd[0] ** 2 + kd[1] ** 2 + kd[2] ** 2
        acc = sum((1 if i == j else 2) * kd[i] * kd[j] * t_ij[(i, j)] for i, j in self.PAIRS)
        p = -np.divide(acc, k2, out=np.zeros_like(acc), where=k2 > 0)
        return p * self.grid.dealias_mask


def _energy(c: np.ndarray, grid: Grid) -> float:
    return spectral_l2(c, grid) ** 2


def _dissipation(c: np.ndarray, grid: Grid) -> float:
    a2 = np.sum(np.abs(c) ** 2, axis=0)
    return float(grid.volume * np.sum(grid.mode_weights * grid.ksq * a2))


def _rel_div(c: np.ndarray, grid: Grid) -> float:
    grad = np.sqrt(_dissipation(c, grid))
    div = spectral_l2(divergence_coeffs(c, grid), grid)
    return div / grad if grad > 0 else div


def solve_ns3d(u0: VectorField, cfg: SolverConfig, store_pressure: bool = True,
               store_rates: bool = False) -> Trajectory:
    """Integrate the 3D Navier-Stokes equations from a divergence-free, mean-free datum."""
    g = u0.grid
    if np.any(u0.coeffs[:, 0, 0, 0] != 0):
        raise ValueError("u0 must be mean-free")
    norm0 = spectral_l2(u0.coeffs, g)
    if norm0 > 0 and spectral_l2(divergence_coeffs(u0.coeffs, g), g) > 1e-10 * np.sqrt(_dissipation(u0.coeffs, g)):
        raise ValueError("u0 must be divergence-free")
    op = NS3DOperator(g)
    nonlin = lambda y, t: [op(y[0])]
    decay = lambda tau: [np.exp(-tau * g.ksq)]
    runner = _Runner(cfg, nonlin, decay, lambda: op.last_speed, min(g.dx_h, g.dx_v))

    ns = cfg.n_samples
    states = np.empty((ns, 3) + g.spectral_shape, complex)
    pressures = np.empty((ns,) + g.spectral_shape, complex) if store_pressure else None
    rates = np.empty_like(states) if store_rates else None
    energy = np.empty(ns)
    h12 = np.empty(ns)
    divres = np.empty(ns)
    step_t, step_d = [0.0], [_dissipation(u0.coeffs * g.dealias_mask, g)]

    def on_sample(n, t, y):
        c = y[0]
        states[n] = c
        energy[n] = _energy(c, g)
        h12[n] = np.sqrt(nm.hs_norm_sq_coeffs(c, g, 0.5))
        divres[n] = _rel_div(c, g)
        if store_pressure:
            pressures[n] = op.pressure(c)
        if store_rates:
            rates[n] = op(c) - g.ksq * c

    def on_step(t, y):
        step_t.append(t)
        step_d.append(_dissipation(y[0], g))

    runner.step_hook = on_step
    runner.run([u0.coeffs * g.dealias_mask], on_sample)
    t_arr, d_arr = np.asarray(step_t), np.asarray(step_d)
    dissipated = 2 * simpson(d_arr, x=t_arr) if t_arr.size > 2 else 0.0
    e0 = energy[0]
    balance = abs(energy[-1] + dissipated - e0) / e0 if e0 > 0 else 0.0
    diag = dict(energy=energy, h12=h12, divergence=divres, dissipated=dissipated,
                energy_balance=balance, halvings=runner.halvings)
    return Trajectory(g, cfg.sample_times, states, pressures, rates, "spectral", diag)


# 2D Navier-Stokes, plane by plane ---------------------------------------------------


class NS2DPlanes:
    """2D Navier-Stokes nonlinearity on a batch of planes, spectra of shape ``(B, 2, n, n//2+1)``."""

    def __init__(self, n: int, length: float):
        self.n, self.length = n, length
        m1 = np.fft.fftfreq(n, 1.0 / n).round()
        m2 = np.arange(n // 2 + 1)
        k1 = 2 * np.pi / length * m1
        k2 = 2 * np.pi / length * m2
        self.k1 = k1[:, None]
        self.k2 = k2[None, :]
        self.kd1 = np.where(np.abs(m1) == n // 2, 0.0, k1)[:, None]
        self.kd2 = np.where(m2 == n // 2, 0.0, k2)[None, :]
        self.ksq = self.k1**2 + self.k2**2
        self.mask = (3 * np.abs(m1)[:, None] < n) & (3 * m2[None, :] < n)
        kdsq = self.kd1**2 + self.kd2**2
        self.inv_kdsq = np.divide(1.0, kdsq, out=np.zeros_like(kdsq), where=kdsq > 0)
        self.last_speed = 0.0

    def _products(self, y: np.ndarray):
        v = sfft.irfft2(y, s=(self.n, self.n), norm="forward", workers=FFT_WORKERS)
        self.last_speed = float(np.sqrt(np.max(v[:, 0] ** 2 + v[:, 1] ** 2))) if v.size else 0.0
        t11 = sfft.rfft2(v[:, 0] * v[:, 0], norm="forward", workers=FFT_WORKERS)
        t12 = sfft.rfft2(v[:, 0] * v[:, 1], norm="forward", workers=FFT_WORKERS)
        t22 = sfft.rfft2(v[:, 1] * v[:, 1], norm="forward", workers=FFT_WORKERS)
        return t11, t12, t22

    def __call__(self, y: np.ndarray) -> np.ndarray:
        t11, t12, t22 = self._products(y)
        n1 = -1j * (self.kd1 * t11 + self.kd2 * t12)
        n2 = -1j * (self.kd1 * t12 + self.kd2 * t22)
        kn = (self.kd1 * n1 + self.kd2 * n2) * self.inv_kdsq
        out = np.empty_like(y)
        out[:, 0] = (n1 - self.kd1 * kn) * self.mask
        out[:, 1] = (n2 - self.kd2 * kn) * self.mask
        return out

    def pressure(self, y: np.ndarray) -> np.ndarray:
        t11, t12, t22 = self._products(y)
        acc = self.kd1**2 * t11 + 2 * self.kd1 * self.kd2 * t12 + self.kd2**2 * t22
        return -acc * self.inv_kdsq * self.mask


def _ns2d_core(y0: np.ndarray, n: int, length: float, cfg: SolverConfig, store_rates: bool = True):
    op = NS2DPlanes(n, length)
    nonlin = lambda y, t: [op(y[0])]
    decay = lambda tau: [np.exp(-tau * op.ksq)]
    runner = _Runner(cfg, nonlin, decay, lambda: op.last_speed, length / n)
    ns = cfg.n_samples
    states = np.empty((ns,) + y0.shape, complex)
    pressures = np.empty((ns, y0.shape[0]) + y0.shape[2:], complex)
    rates = np.empty_like(states) if store_rates else None

    def on_sample(i, t, y):
        states[i] = y[0]
        pressures[i] = op.pressure(y[0])
        if store_rates:
            rates[i] = op(y[0]) - op.ksq * y[0]

    y0 = y0.copy()
    y0[:, :] *= op.mask
    runner.run([y0], on_sample)
    return states, pressures, rates, runner.halvings


def solve_ns2d(v0: np.ndarray, length: float, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Standalone 2D run: ``v0`` physical samples ``(2, n, n)``; returns (times, physical states)."""
    n = v0.shape[-1]
    y0 = sfft.rfft2(v0, norm="forward", workers=FFT_WORKERS)[None]
    states, _, _, _ = _ns2d_core(y0, n, length, cfg, store_rates=False)
    phys = sfft.irfft2(states[:, 0], s=(n, n), norm="forward", workers=FFT_WORKERS)
    return cfg.sample_times, phys


def solve_ns2d_family(v0h: VectorField, cfg: SolverConfig) -> Trajectory:
    """Evolve every x3-plane of ``v0h`` under 2D Navier-Stokes, independently."""
    g = v0h.grid
    if np.any(np.abs(v0h.coeffs[2]) > 0):
        raise ValueError("v0h must have zero third component")
    scale = max(spectral_l2(v0h.coeffs, g), 1e-300)
    k1, k2, _ = g.kd
    if spectral_l2(1j * (k1 * v0h.coeffs[0] + k2 * v0h.coeffs[1]), g) > 1e-10 * scale:
        raise ValueError("v0h must be horizontally divergence-free")
    y0 = coeffs_to_slices(v0h.coeffs, g)
    states, pressures, rates, halvings = _ns2d_core(y0, g.n_h, g.len_h, cfg)
    energy = np.array([g.dx_v * g.area * np.sum(_plane_energy(s)) for s in states])
    diag = dict(energy=energy, halvings=halvings)
    return Trajectory(g, cfg.sample_times, states, pressures, rates, "slices", diag)


def _plane_energy(sl: np.ndarray) -> np.ndarray:
    w = np.full(sl.shape[-1], 2.0)
    w[0] = 1.0
    if sl.shape[-2] % 2 == 0:
        w[-1] = 1.0
    return np.sum(w * np.abs(sl) ** 2, axis=(1, 2, 3))


# the anisotropic linear corrector ---------------------------------------------------------


class HermiteField:
    """Cubic Hermite interpolation in time of physical samples with known rates."""

    def __init__(self, times: np.ndarray, values: np.ndarray, rates: np.ndarray):
        self.times, self.values, self.rates = times, values, rates

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"time {t} outside the sampled range")
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        dt = ts[k + 1] - ts[k]
        s = (t - ts[k]) / dt
        if s <= 1e-14:
            return self.values[k]
        if s >= 1 - 1e-14:
            return self.values[k + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (h00 * self.values[k] + h10 * dt * self.rates[k]
                + h01 * self.values[k + 1] + h11 * dt * self.rates[k + 1])


def horizontal_velocity_history(vh_traj: Trajectory) -> HermiteField:
    """Physical ``v^h`` samples and rates on the unscaled grid, band-limited to the dealiased range."""
    g = vh_traj.grid
    if vh_traj.rates is None:
        raise ValueError("the horizontal trajectory must carry rates for time interpolation")
    vals = np.empty((len(vh_traj), 2) + g.shape)
    rates = np.empty_like(vals)
    for i in range(len(vh_traj)):
        vals[i] = inv(vh_traj.state(i).coeffs[:2] * g.dealias_mask, g)
        rates[i] = inv(vh_traj.rate(i).coeffs[:2] * g.dealias_mask, g)
    return HermiteField(np.asarray(vh_traj.times), vals, rates)


class TransportOperator:
    """``N(w) = -(v^h . grad_h w)`` followed by the eps-anisotropic projection."""

    def __init__(self, grid: Grid, eps: float, vh: Callable[[float], np.ndarray]):
        self.grid, self.eps, self.vh = grid, eps, vh
        self.last_speed = 0.0

    def advection(self, c: np.ndarray, v: np.ndarray) -> np.ndarray:
        g = self.grid
        kd = g.kd
        out = np.zeros((3,) + g.shape)
        for j in range(2):
            out += v[j] * inv(1j * kd[j] * c, g)
        return fwd(out)

    def project(self, adv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        proj, p = aniso_pressure_coeffs(-adv * self.grid.dealias_mask, self.grid, self.eps)
        return proj * self.grid.dealias_mask, p * self.grid.dealias_mask

    def __call__(self, c: np.ndarray, t: float) -> np.ndarray:
        v = self.vh(t)
        self.last_speed = float(np.sqrt(np.max(v[0] ** 2 + v[1] ** 2)))
        return self.project(self.advection(c, v))[0]

    def pressure_residual(self, c: np.ndarray, p: np.ndarray, t: float) -> float:
        """Relative mismatch of ``-(eps^2 d3^2 + Delta_h) p = div_h(v.grad_h w^h + d3(w^3 v^h))``."""
        g = self.grid
        kd = g.kd
        v = self.vh(t)
        adv_h = self.advection(c, v)[:2] * g.dealias_mask
        w3 = inv(c[2], g)
        flux = np.stack([fwd(w3 * v[0]), fwd(w3 * v[1])]) * g.dealias_mask
        rhs = sum(1j * kd[j] * (adv_h[j] + 1j * kd[2] * flux[j]) for j in range(2))
        lhs = (kd[0] ** 2 + kd[1] ** 2 + self.eps**2 * kd[2] ** 2) * p
        scale = spectral_l2(rhs, g)
        return spectral_l2(lhs - rhs, g) / scale if scale > 0 else spectral_l2(lhs, g)


def solve_linear_teps(w0: VectorField, vh_traj: Trajectory | None, eps: float, cfg: SolverConfig,
                      vh: Callable[[float], np.ndarray] | None = None) -> Trajectory:
    """Transport-diffusion of ``w`` by the frozen horizontal flow with anisotropic pressure.

    ``vh_traj`` supplies ``v^h`` at its samples (cubic Hermite in time); a
    callable ``vh(t)`` returning physical ``(2, *grid.shape)`` may be given
    instead.
    """
    g = w0.grid
    if not eps > 0:
        raise ValueError("eps must be positive")
    if spectral_l2(divergence_coeffs(w0.coeffs, g), g) > 1e-10 * max(np.sqrt(_dissipation(w0.coeffs, g)), 1e-300):
        raise ValueError("w0 must be divergence-free")
    if vh is None:
        if vh_traj is None:
            raise ValueError("need a horizontal trajectory or a velocity callable")
        if vh_traj.grid != g:
            raise ValueError("v^h and w must share the unscaled grid")
        if vh_traj.times[0] > 1e-12 or vh_traj.times[-1] < cfg.horizon - 1e-9:
            raise ValueError("the horizontal trajectory does not cover the horizon")
        vh = horizontal_velocity_history(vh_traj)
    op = TransportOperator(g, eps, vh)
    sigma = g.kh_sq + eps**2 * g.k3**2
    runner = _Runner(cfg, lambda y, t: [op(y[0], t)], lambda tau: [np.exp(-tau * sigma)],
                     lambda: op.last_speed, g.dx_h)
    ns = cfg.n_samples
    states = np.empty((ns, 3) + g.spectral_shape, complex)
    pressures = np.empty((ns,) + g.spectral_shape, complex)
    rates = np.empty_like(states)
    residual = np.empty(ns)
    divres = np.empty(ns)

    def on_sample(n, t, y):
        c = y[0]
        states[n] = c
        proj, p = op.project(op.advection(c, vh(t)))
        pressures[n] = p
        rates[n] = proj - sigma * c
        residual[n] = op.pressure_residual(c, p, t)
        divres[n] = _rel_div(c, g)

    runner.run([w0.coeffs * g.dealias_mask], on_sample)
    diag = dict(pressure_residual=residual, divergence=divres, eps=eps, halvings=runner.halvings)
    return Trajectory(g, cfg.sample_times, states, pressures, rates, "spectral", diag)


# assembly ---------------------------------------------------------------------------


def _same_times(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-12)


class ApproxTrajectory:
    """``u_app = u + [v2D]_eps`` with the summands kept separately.

    ``v2D = (v^h + eps w^h, w^3)`` lives on the unscaled grid; ``state(i)``
    relabels it onto the grid of ``u``. Pressures follow the same pattern:
    ``p_app = p + [p0 + eps p1]_eps``.
    """

    def __init__(self, u_traj: Trajectory, vh_traj: Trajectory, w_traj: Trajectory, eps: float):
        for name, tr in (("v^h", vh_traj), ("w", w_traj)):
            if not _same_times(u_traj.times, tr.times):
                raise ValueError(f"time samples of u and {name} differ")
        if vh_traj.grid != w_traj.grid:
            raise ValueError("v^h and w must share the unscaled grid")
        base, tall = vh_traj.grid, u_traj.grid
        q = tall.len_v * eps / base.len_v
        if not np.isclose(tall.len_h, base.len_h, rtol=1e-13) or abs(q - round(q)) > 1e-9 or q < 1 - 1e-9:
            raise ValueError("grid of u is not compatible with the slow scaling of the unscaled grid")
        self.u, self.vh, self.w, self.eps = u_traj, vh_traj, w_traj, eps
        self.grid, self.base = tall, base
        self.times = u_traj.times

    def __len__(self) -> int:
        return len(self.times)

    def v2d(self, i: int) -> VectorField:
        c = self.vh.state(i).coeffs + self.w.states[i] * np.array([self.eps, self.eps, 1.0])[:, None, None, None]
        return VectorField(self.base, c)

    def scaled_v2d(self, i: int) -> VectorField:
        return slow_scale(self.v2d(i), self.eps, self.grid)

    def state(self, i: int) -> VectorField:
        return VectorField(self.grid, self.u.states[i] + self.scaled_v2d(i).coeffs)

    def q2d_pressure(self, i: int) -> Field:
        """``p0 + eps p1`` on the unscaled grid."""
        return Field(self.base, self.vh.pressure(i).coeffs + self.eps * self.w.pressures[i])

    def pressure(self, i: int) -> Field:
        q = slow_scale(self.q2d_pressure(i), self.eps, self.grid)
        return Field(self.grid, self.u.pressure(i).coeffs + q.coeffs)

    def divergence_residuals(self) -> np.ndarray:
        return np.array([_rel_div(self.state(i).coeffs, self.grid) for i in range(len(self))])


def assemble_uapp(u_traj: Trajectory, vh_traj: Trajectory, w_traj: Trajectory, eps: float) -> ApproxTrajectory:
    return ApproxTrajectory(u_traj, vh_traj, w_traj, eps)


class RemainderTrajectory:
    """``R = u_eps - u_app`` evaluated sample by sample."""

    def __init__(self, u_eps: Trajectory, uapp: ApproxTrajectory):
        if not _same_times(u_eps.times, uapp.times):
            raise ValueError("time samples of u_eps and u_app differ")
        if u_eps.grid != uapp.grid:
            raise ValueError("u_eps and u_app live on different grids")
        self.u_eps, self.uapp = u_eps, uapp
        self.grid, self.times = u_eps.grid, u_eps.times

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> VectorField:
        return VectorField(self.grid, self.u_eps.states[i] - self.uapp.state(i).coeffs)

    def initial_norm(self) -> float:
        return spectral_l2(self.state(0).coeffs, self.grid)

    def h12_history(self) -> np.ndarray:
        return np.array([np.sqrt(nm.hs_norm_sq_coeffs(self.state(i).coeffs, self.grid, 0.5))
                         for i in range(len(self))])


def remainder(u_eps_traj: Trajectory, uapp_traj: ApproxTrajectory) -> RemainderTrajectory:
    return RemainderTrajectory(u_eps_traj, uapp_traj)


# direct integration of the remainder system --------------------------------------------------


def solve_remainder_direct(u0: VectorField, v0h: VectorField, w0: VectorField, eps: float,
                           cfg: SolverConfig) -> Trajectory:
    """Integrate ``u``, the plane family, ``w`` and ``R`` together.

    ``R`` obeys ``dR/dt = Delta R + N(u + V + R) - N(u) - [N2D(v^h) + eps N_T^h(w)
    - eps^2 d3^2 v^h, N_T^3(w)]_eps`` with ``V = [v2D]_eps`` and ``R(0) = 0``,
    which is the modified system forced by minus the error term. All four
    states share the RK4 stages, so ``v^h`` enters ``w`` without time
    interpolation.
    """
    tall, base = u0.grid, v0h.grid
    ns_op = NS3DOperator(tall)
    plane_op = NS2DPlanes(base.n_h, base.len_h)
    epsv = np.array([eps, eps, 1.0])[:, None, None, None]
    current_vh = {}
    tr_op = TransportOperator(base, eps, lambda t: current_vh["v"])
    sig_w = base.kh_sq + eps**2 * base.k3**2

    def rhs(y, t):
        cu, cv, cw, cr = y
        vh_coeffs = slices_to_coeffs(cv, base)
        current_vh["v"] = inv(vh_coeffs[:2] * base.dealias_mask, base)
        n_u = ns_op(cu)
        n_v = plane_op(cv)
        n_w = tr_op(cw, t)
        v2d = vh_coeffs + epsv * cw
        big_v = slow_scale(VectorField(base, v2d), eps, tall).coeffs
        n_full = ns_op(cu + big_v + cr)
        nv3 = slices_to_coeffs(n_v, base)
        src = nv3 + epsv * n_w
        src[:2] += (eps * base.k3) ** 2 * vh_coeffs[:2]
        src_tall = slow_scale(VectorField(base, src), eps, tall).coeffs
        n_r = (n_full - n_u - src_tall) * tall.dealias_mask
        return [n_u, n_v, n_w, n_r]

    def decay(tau):
        return [np.exp(-tau * tall.ksq), np.exp(-tau * plane_op.ksq),
                np.exp(-tau * sig_w), np.exp(-tau * tall.ksq)]

    runner = _Runner(cfg, rhs, decay, lambda: ns_op.last_speed, min(tall.dx_h, tall.dx_v))
    ns = cfg.n_samples
    states = np.empty((ns, 3) + tall.spectral_shape, complex)

    def on_sample(n, t, y):
        states[n] = y[3]

    y0 = [u0.coeffs * tall.dealias_mask, coeffs_to_slices(v0h.coeffs, base) * plane_op.mask,
          w0.coeffs * base.dealias_mask, np.zeros((3,) + tall.spectral_shape, complex)]
    runner.run(y0, on_sample)
    return Trajectory(tall, cfg.sample_times, states, None, None, "spectral", dict(halvings=runner.halvings))
