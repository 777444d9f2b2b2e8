"""Time integration of the normalized and non-normalized conformal flows.

The state variable is the positive conformal factor u.  The normalized flow

    du/dt = (n-2)/4 * (f(S) - A) * u,     A = volume-weighted mean of f(S),

keeps the total volume fixed; dropping A gives the non-normalized flow.
Both are integrated by the method of lines with explicit Euler or classical
RK4, with the nonlocal mean A recomputed at every internal stage so that the
quadrature-exact volume stationarity is preserved at scheme order.

Stability control: the principal part of the linearized right-hand side is a
diffusion with state-dependent coefficient

    kappa(x) = (n-1) * |f'(S)| * u**(1-beta),

so the adaptive policy takes dt = safety * h_min**2 / (2 * d * max kappa)
with d active spatial dimensions (the forward-Euler diffusion limit; RK4 has
a slightly larger real-axis stability interval and is run at the same dt).

For homogeneous f of degree alpha, a non-normalized run can be mapped onto
the normalized flow by rescaling the solution with exp(-(n-2)/4 * eta) and
the time by d(tau)/dt = exp(-alpha * eta), where eta is the time integral of
the logged A series; ``hamilton_rescale`` implements this with trapezoid
quadrature.
"""

import math
from dataclasses import dataclass

import numpy as np

from .conformal import Background, ConformalState, FDomainError
from .fzoo import FSpec, homogeneity_check
from .grid import GridSpec, PositivityError, ScalarField, laplacian0_values, power

__all__ = [
    "DtPolicy",
    "RunConfig",
    "Trajectory",
    "ParabolicityError",
    "RECORD_COLUMNS",
    "BLOWUP_SUP",
    "POSITIVITY_FLOOR",
    "rhs_normalized",
    "rhs_nonnormalized",
    "stable_dt",
    "step",
    "renormalize_volume",
    "run",
    "hamilton_rescale",
    "frechet_apply",
    "frechet_normalized_apply",
    "check_parabolic_validity",
]

RECORD_COLUMNS = (
    "t", "dt", "Smin", "Smax", "A", "sigma", "vol",
    "fSA_sup", "lp2", "lpn2", "umin", "umax",
)

BLOWUP_SUP = 1e8
POSITIVITY_FLOOR = 1e-10
_MAX_STEPS = 5_000_000


class ParabolicityError(RuntimeError):
    """f' is not negative on the attained curvature range."""


@dataclass(frozen=True)
class DtPolicy:
    mode: str
    dt: float = 0.0
    safety: float = 0.8

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"dt policy must be 'fixed' or 'adaptive', got {self.mode!r}")
        if self.mode == "fixed" and self.dt <= 0.0:
            raise ValueError("fixed dt policy needs dt > 0")
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("safety must lie in (0, 1]")

    @classmethod
    def fixed(cls, dt: float) -> "DtPolicy":
        return cls(mode="fixed", dt=float(dt))

    @classmethod
    def adaptive(cls, safety: float = 0.8) -> "DtPolicy":
        return cls(mode="adaptive", safety=float(safety))


@dataclass(frozen=True)
class RunConfig:
    background: Background
    f: FSpec
    u0: ScalarField
    T_final: float
    dt_policy: DtPolicy = DtPolicy.adaptive()
    stop_tol: float = 1e-8
    renormalize_volume: bool = True
    log_cadence: int = 10
    scheme: str = "rk4"
    normalized: bool = True
    tau_stop: float | None = None
    tau_alpha: float | None = None

    def __post_init__(self):
        if self.T_final <= 0.0:
            raise ValueError("T_final must be positive")
        if self.stop_tol < 0.0:
            raise ValueError("stop_tol must be nonnegative")
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"scheme must be 'euler' or 'rk4', got {self.scheme!r}")
        if self.log_cadence < 1:
            raise ValueError("log_cadence must be >= 1")
        if self.u0.grid != self.background.grid:
            raise ValueError("u0 must live on the background grid")
        if not self.normalized and self.renormalize_volume:
            raise ValueError("volume renormalization only applies to the normalized flow")
        if self.tau_stop is not None:
            if self.normalized:
                raise ValueError("tau_stop only applies to non-normalized runs")
            if self.tau_alpha is None:
                raise ValueError("tau_stop needs tau_alpha (the homogeneity degree)")
            if self.log_cadence != 1:
                raise ValueError("tau-stopped runs must log every step")


@dataclass
class Trajectory:
    """Logged time series of a run: diagnostics plus u snapshots.

    ``columns`` holds one array per RECORD_COLUMNS entry; ``snapshots`` has
    one u field per record.  Times are strictly increasing and every logged
    state is positive.  ``vol_pre`` keeps the conservation defect
    measurable: the pre-correction volume when renormalization is on, the
    plain volume otherwise.
    """

    kind: str
    termination: str
    columns: dict
    snapshots: np.ndarray
    grid: GridSpec
    n: int
    vol_pre: np.ndarray
    config: RunConfig | None = None
    notes: str = ""

    @property
    def times(self) -> np.ndarray:
        return self.columns["t"]

    @property
    def n_records(self) -> int:
        return len(self.columns["t"])

    def state(self, k: int) -> ConformalState:
        return ConformalState(ScalarField(self.grid, self.snapshots[k]), float(self.times[k]))

    @property
    def final_state(self) -> ConformalState:
        return self.state(self.n_records - 1)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


class _Kernel:
    """Raw-array right-hand-side evaluations shared by one run."""

    def __init__(self, bg: Background, f: FSpec, normalized: bool):
        c = bg.constants
        self.bg = bg
        self.f = f
        self.normalized = normalized
        self.n = bg.n
        self.beta = c.beta
        self.cn = c.c_n
        self.m = c.vol_exp
        self.pref = 0.25 * (bg.n - 2.0)
        self.S0v = bg.S0.values
        self.grid = bg.grid
        self.d = bg.grid.active_dims
        self.hmin2 = bg.grid.min_spacing ** 2

    def lap(self, v: np.ndarray) -> np.ndarray:
        return laplacian0_values(self.grid, v)

    def curvature(self, u: np.ndarray) -> np.ndarray:
        return power(u, -self.beta) * (self.S0v * u - self.cn * self.lap(u))

    def domain_ok(self, S: np.ndarray) -> bool:
        return self.f.domain.contains_interval(float(S.min()), float(S.max()))

    def require_domain(self, S: np.ndarray):
        if not self.domain_ok(S):
            raise FDomainError(
                f"f-domain violation: S range [{S.min():g}, {S.max():g}]"
                f" not inside {self.f.domain}"
            )

    def weight(self, u: np.ndarray) -> np.ndarray:
        return power(u, self.m)

    def mean_f(self, phi: np.ndarray, w: np.ndarray) -> float:
        return float((phi * w).mean() / w.mean())

    def rhs(self, u: np.ndarray) -> np.ndarray:
        if u.min() <= 0.0:
            raise PositivityError("state outside positive cone")
        S = self.curvature(u)
        self.require_domain(S)
        phi = self.f.eval_f(S)
        if self.normalized:
            return self.pref * (phi - self.mean_f(phi, self.weight(u))) * u
        return self.pref * phi * u

    def advance(self, u: np.ndarray, dt: float, scheme: str) -> np.ndarray:
        if scheme == "euler":
            return u + dt * self.rhs(u)
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * dt * k1)
        k3 = self.rhs(u + 0.5 * dt * k2)
        k4 = self.rhs(u + dt * k3)
        return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def stable_dt(self, u: np.ndarray, S: np.ndarray, safety: float) -> float:
        fp = self.f.eval_fp(S)
        if float(fp.max()) >= 0.0:
            raise ParabolicityError("parabolicity lost: f' >= 0 on the attained S range")
        kappa = (self.n - 1.0) * np.abs(fp) * power(u, 1.0 - self.beta)
        return safety * self.hmin2 / (2.0 * self.d * float(kappa.max()))

    def record(self, u: np.ndarray, t: float, dt_used: float):
        """Full diagnostics row; A and fSA_sup are NaN outside f's domain."""
        S = self.curvature(u)
        w = self.weight(u)
        wm = float(w.mean())
        vol = wm
        sig = float((S * w).mean()) / wm
        ok = self.domain_ok(S)
        if ok:
            phi = self.f.eval_f(S)
            A = self.mean_f(phi, w)
            fsa = float(np.abs(phi - A).max())
        else:
            A = math.nan
            fsa = math.nan
        halfn = 0.5 * self.n
        row = {
            "t": t,
            "dt": dt_used,
            "Smin": float(S.min()),
            "Smax": float(S.max()),
            "A": A,
            "sigma": sig,
            "vol": vol,
            "fSA_sup": fsa,
            "lp2": float(((S * S) * w).mean()) ** 0.5,
            "lpn2": float((np.abs(S) ** halfn * w).mean()) ** (1.0 / halfn),
            "umin": float(u.min()),
            "umax": float(u.max()),
        }
        return row, ok, S


# ---------------------------------------------------------------------------
# Public single-state operations
# ---------------------------------------------------------------------------

def rhs_normalized(bg: Background, state: ConformalState, f: FSpec) -> ScalarField:
    """(n-2)/4 * (f(S) - A) * u.  Volume-stationary by construction."""
    return ScalarField(bg.grid, _Kernel(bg, f, normalized=True).rhs(state.u.values))


def rhs_nonnormalized(bg: Background, state: ConformalState, f: FSpec) -> ScalarField:
    """(n-2)/4 * f(S) * u; differs from the normalized rhs by (n-2)/4 * A * u."""
    return ScalarField(bg.grid, _Kernel(bg, f, normalized=False).rhs(state.u.values))


def stable_dt(bg: Background, state: ConformalState, f: FSpec, safety: float = 0.8) -> float:
    """Forward-Euler diffusion limit for the state-dependent diffusivity.

    The parabolicity margin is evaluated on the attained grid values of S;
    a nonpositive margin raises ParabolicityError.
    """
    kern = _Kernel(bg, f, normalized=True)
    u = state.u.values
    S = kern.curvature(u)
    kern.require_domain(S)
    return kern.stable_dt(u, S, safety)


def step(bg: Background, state: ConformalState, f: FSpec, dt: float,
         scheme: str = "rk4", normalized: bool = True) -> ConformalState:
    """One explicit step; t advances by dt.  Raises PositivityError or
    FDomainError when the step leaves the admissible region.

    Stability is the caller's responsibility: Euler needs dt within
    stable_dt, RK4 tolerates moderately more (its real-axis stability
    interval is ~1.4x Euler's); run() stays at stable_dt for both.
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"scheme must be 'euler' or 'rk4', got {scheme!r}")
    kern = _Kernel(bg, f, normalized=normalized)
    u_new = kern.advance(state.u.values, dt, scheme)
    return ConformalState(ScalarField(bg.grid, u_new), state.t + dt)


def renormalize_volume(state: ConformalState) -> ConformalState:
    """Scale u so the total volume returns to one exactly (to rounding)."""
    n = state.u.grid.ambient_n
    m = 2.0 * n / (n - 2.0)
    vol = float(power(state.u.values, m).mean())
    u_new = state.u.values * vol ** (-1.0 / m)
    return ConformalState(ScalarField(state.u.grid, u_new), state.t)


def check_parabolic_validity(bg: Background, state: ConformalState, f: FSpec):
    """(min u, min -f'(S)): both positive iff the state is uniformly positive
    with f strictly decreasing on the attained curvature values."""
    kern = _Kernel(bg, f, normalized=True)
    S = kern.curvature(state.u.values)
    kern.require_domain(S)
    fp_margin = float((-f.eval_fp(S)).min())
    return state.u.min(), fp_margin


# ---------------------------------------------------------------------------
# Linearizations
# ---------------------------------------------------------------------------

def frechet_apply(bg: Background, u: ScalarField, h: ScalarField, f: FSpec) -> ScalarField:
    """Derivative of u -> f(S)*u applied to h:

        f(S)*h + f'(S) * (u**(1-beta) * L(h) - beta*S*h).
    """
    kern = _Kernel(bg, f, normalized=False)
    uv, hv = u.values, h.values
    if uv.min() <= 0.0:
        raise PositivityError("state outside positive cone")
    S = kern.curvature(uv)
    kern.require_domain(S)
    Lh = kern.S0v * hv - kern.cn * kern.lap(hv)
    vals = f.eval_f(S) * hv + f.eval_fp(S) * (power(uv, 1.0 - kern.beta) * Lh - kern.beta * S * hv)
    return ScalarField(bg.grid, vals)


def frechet_normalized_apply(bg: Background, u: ScalarField, h: ScalarField, f: FSpec) -> ScalarField:
    """Derivative of the full normalized right-hand-side factor u -> (f(S)-A)*u.

    Chain rule: DF(u)h - A*h - DA(h)*u, where DA collects the variations of
    f(S), of the volume density (2n/(n-2) * h/u per unit volume) and of the
    normalizing volume itself.
    """
    kern = _Kernel(bg, f, normalized=True)
    uv, hv = u.values, h.values
    if uv.min() <= 0.0:
        raise PositivityError("state outside positive cone")
    S = kern.curvature(uv)
    kern.require_domain(S)
    Lh = kern.S0v * hv - kern.cn * kern.lap(hv)
    dS = power(uv, -kern.beta) * Lh - kern.beta * S * hv / uv
    phi = f.eval_f(S)
    fp = f.eval_fp(S)
    w = kern.weight(uv)
    wm = float(w.mean())
    A = float((phi * w).mean()) / wm
    dA = float((fp * dS * w).mean()) / wm \
        + kern.m * float(((phi - A) * hv / uv * w).mean()) / wm
    DF = phi * hv + fp * (power(uv, 1.0 - kern.beta) * Lh - kern.beta * S * hv)
    return ScalarField(bg.grid, DF - A * hv - dA * uv)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def run(config: RunConfig) -> Trajectory:
    """Integrate until T_final, stationarity (normalized runs), or failure.

    Deterministic for a fixed config.  Diagnostics are logged every
    log_cadence steps plus always at the first and terminal states; the
    terminal record of an f-domain violation carries NaN in the f columns.
    """
    bg, f = config.background, config.f
    kern = _Kernel(bg, f, normalized=config.normalized)
    u = np.array(config.u0.values, dtype=float)
    if u.min() <= 0.0:
        raise PositivityError("state outside positive cone")
    if config.renormalize_volume:
        u = u * float(kern.weight(u).mean()) ** (-1.0 / kern.m)

    rows = {k: [] for k in RECORD_COLUMNS}
    snaps = []
    vol_pre = []
    last_pre = float(kern.weight(u).mean())

    track_tau = config.tau_stop is not None
    eta = 0.0
    tau = 0.0
    prev_t = 0.0
    prev_A = math.nan
    prev_eta = 0.0

    t = 0.0
    dt_used = 0.0
    step_idx = 0
    logged_idx = -1
    termination = None
    notes = ""

    def log_row(row):
        nonlocal logged_idx
        for k in RECORD_COLUMNS:
            rows[k].append(row[k])
        snaps.append(u.copy())
        # with renormalization on this is the volume before the correction
        # that produced the state; otherwise the drift lives in vol itself
        vol_pre.append(last_pre if config.renormalize_volume else row["vol"])
        logged_idx = step_idx

    while True:
        if step_idx > _MAX_STEPS:
            raise RuntimeError("step budget exhausted; check the configuration")
        row, domain_ok, S = kern.record(u, t, dt_used)

        if track_tau and step_idx > 0 and math.isfinite(prev_A) and math.isfinite(row["A"]):
            d = t - prev_t
            prev_eta = eta
            eta += 0.5 * (prev_A + row["A"]) * d
            tau += 0.5 * (math.exp(-config.tau_alpha * prev_eta)
                          + math.exp(-config.tau_alpha * eta)) * d
        prev_t, prev_A = t, row["A"]

        if row["umin"] <= POSITIVITY_FLOOR:
            termination = "positivity_lost"
        elif row["umax"] > BLOWUP_SUP or max(abs(row["Smin"]), abs(row["Smax"])) > BLOWUP_SUP:
            termination = "blowup"
        elif not domain_ok:
            termination = "f_domain_violation"
        elif config.normalized and row["fSA_sup"] <= config.stop_tol:
            termination = "stationary"
        elif t >= config.T_final - 1e-14:
            termination = "time_reached"
        elif track_tau and tau >= config.tau_stop:
            termination = "time_reached"
            notes = f"rescaled-time target tau={config.tau_stop:g} reached at t={t:g}"

        if termination is not None or step_idx % config.log_cadence == 0:
            log_row(row)
        if termination is not None:
            break

        try:
            if config.dt_policy.mode == "fixed":
                dt = config.dt_policy.dt
            else:
                dt = kern.stable_dt(u, S, config.dt_policy.safety)
            # land exactly on the horizon: clip the step, and absorb a
            # near-exact hit instead of leaving a sliver interval
            remaining = config.T_final - t
            if remaining <= 1.05 * dt:
                dt = remaining
            u_new = kern.advance(u, dt, config.scheme)
            # never accept (or log) a state at or under the positivity floor
            if float(u_new.min()) <= POSITIVITY_FLOOR:
                termination = "positivity_lost"
        except PositivityError:
            termination = "positivity_lost"
        except FDomainError:
            termination = "f_domain_violation"
        except ParabolicityError as exc:
            termination = "f_domain_violation"
            notes = str(exc)
        if termination is not None:
            if logged_idx != step_idx:
                log_row(row)
            break

        if config.renormalize_volume:
            last_pre = float(kern.weight(u_new).mean())
            u_new = u_new * last_pre ** (-1.0 / kern.m)
        u = u_new
        t += dt
        dt_used = dt
        step_idx += 1

    columns = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    return Trajectory(
        kind="normalized" if config.normalized else "non_normalized",
        termination=termination,
        columns=columns,
        snapshots=np.asarray(snaps),
        grid=bg.grid,
        n=bg.n,
        vol_pre=np.asarray(vol_pre, dtype=float),
        config=config,
        notes=notes,
    )


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


HOMOGENEITY_TOL = 1e-8


def hamilton_rescale(traj: Trajectory, f: FSpec) -> Trajectory:
    """Map a non-normalized trajectory onto the normalized flow.

    eta is the trapezoid integral of the logged A series, the new time is
    tau with d(tau)/dt = exp(-alpha*eta), and the conformal factor becomes
    exp(-(n-2)/4 * eta) * v.  Requires f homogeneous of a known degree; both
    eta(0) and tau(0) are zero.
    """
    if traj.kind != "non_normalized":
        raise ValueError("hamilton_rescale expects a non-normalized trajectory")
    alpha = f.alpha_homogeneous
    if alpha is None:
        raise ValueError(f"{f.name} declares no homogeneity degree")
    defect = homogeneity_check(f, alpha)
    if defect > HOMOGENEITY_TOL:
        raise ValueError(f"{f.name} is not {alpha:g}-homogeneous (defect {defect:.3g})")
    if traj.config is None:
        raise ValueError("trajectory carries no configuration")

    t = traj.times
    A = traj.column("A")
    eta = _cumtrapz(A, t)
    tau = _cumtrapz(np.exp(-alpha * eta), t)
    scale = np.exp(-0.25 * (traj.n - 2.0) * eta)
    rescaled = traj.snapshots * scale.reshape((-1,) + (1,) * (traj.snapshots.ndim - 1))

    kern = _Kernel(traj.config.background, f, normalized=True)
    rows = {k: [] for k in RECORD_COLUMNS}
    prev_tau = 0.0
    for k in range(traj.n_records):
        row, _, _ = kern.record(rescaled[k], float(tau[k]), float(tau[k]) - prev_tau)
        prev_tau = float(tau[k])
        for key in RECORD_COLUMNS:
            rows[key].append(row[key])
    return Trajectory(
        kind="rescaled",
        termination=traj.termination,
        columns={k: np.asarray(v, dtype=float) for k, v in rows.items()},
        snapshots=rescaled,
        grid=traj.grid,
        n=traj.n,
        vol_pre=np.ones(traj.n_records),
        config=traj.config,
        notes=f"rescaled from non-normalized run (alpha={alpha:g})",
    )
