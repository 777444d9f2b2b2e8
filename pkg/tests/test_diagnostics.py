import numpy as np
import pytest

import conflow
from conflow import diagnostics as dg
from conflow.conformal import ConformalState, background_from_spec, scalar_curvature
from conflow.flow import DtPolicy, RECORD_COLUMNS, RunConfig, Trajectory, _Kernel, run
from conflow.fzoo import classical, expdecay
from conflow.grid import ScalarField, grad_inner, power

from conftest import COS_PHASE, grid1d


NEG_BG = "sinusoidal:-1.5,0.4,0"
POS_BG = "sinusoidal:1.0,0.5,0"


def make_run(bgspec, f, u0spec="constant:1", N=64, T=1.0, stop_tol=1e-8,
             cadence=10, dt=None, renorm=True):
    g = grid1d(N=N)
    bg = background_from_spec(g, bgspec)
    u0 = conflow.field_from_spec(g, u0spec)
    policy = DtPolicy.adaptive(0.8) if dt is None else DtPolicy.fixed(dt)
    cfg = RunConfig(background=bg, f=f, u0=u0, T_final=T, dt_policy=policy,
                    stop_tol=stop_tol, renormalize_volume=renorm, log_cadence=cadence)
    return run(cfg), bg


def rebuild(traj, snapshots, times=None):
    """Doctored trajectory with recomputed per-record diagnostics."""
    cfg = traj.config
    kern = _Kernel(cfg.background, cfg.f, normalized=True)
    times = traj.times if times is None else np.asarray(times, dtype=float)
    rows = {k: [] for k in RECORD_COLUMNS}
    prev_t = times[0]
    for k, u in enumerate(snapshots):
        row, _, _ = kern.record(np.asarray(u, dtype=float), float(times[k]),
                                float(times[k]) - prev_t)
        prev_t = float(times[k])
        for key in RECORD_COLUMNS:
            rows[key].append(row[key])
    return Trajectory(
        kind="normalized",
        termination=traj.termination,
        columns={k: np.asarray(v) for k, v in rows.items()},
        snapshots=np.asarray(snapshots, dtype=float),
        grid=traj.grid,
        n=traj.n,
        vol_pre=np.ones(len(snapshots)),
        config=cfg,
        notes="crafted",
    )


def reverse_in_time(traj):
    return rebuild(traj, traj.snapshots[::-1])


@pytest.fixture(scope="module")
def neg_run():
    traj, bg = make_run(NEG_BG, classical(), T=20.0, N=64)
    assert traj.termination == "stationary"
    return traj, bg


@pytest.fixture(scope="module")
def pos_run():
    traj, bg = make_run(POS_BG, expdecay(1.0), T=3.0, N=64)
    assert traj.termination == "time_reached"
    return traj, bg


@pytest.fixture(scope="module")
def flat_run():
    traj, bg = make_run("constant:0", classical(),
                        u0spec=f"sinusoidal:1.0,0.3,0,{COS_PHASE}", T=1.0, N=64)
    return traj, bg


# ---------------------------------------------------------------------------
# Positive paths
# ---------------------------------------------------------------------------

def test_minmax_passes_on_negative_run(neg_run):
    traj, bg = neg_run
    rep = dg.check_minmax_principle(traj, bg, classical())
    assert rep.passed is True
    assert rep.segment["records"] == traj.n_records


def test_minmax_tolerance_calibration():
    # resolution study: measured violations sit far below the h^2 allowance
    for N in (64, 128):
        traj, bg = make_run(NEG_BG, classical(), T=2.0, N=N)
        rep = dg.check_minmax_principle(traj, bg, classical())
        assert rep.passed is True
        assert rep.measured["max_rise_of_Smax"] <= 1e-8
        assert rep.measured["max_drop_of_Smin"] <= 1e-8
        assert rep.tolerances["eta"] >= 1e-6


def test_decay_fit_window_skips_transient(neg_run):
    traj, _ = neg_run
    fit = dg.fit_decay(traj)
    assert fit.window[0] >= 0.1 * traj.times[-1] - 1e-12
    assert fit.n_points >= 3
    assert fit.B_fit > 0


def test_decay_passes_on_negative_run(neg_run):
    traj, bg = neg_run
    rep = dg.compare_decay(traj, bg, classical())
    assert rep.passed is True
    assert rep.measured["B_fit"] >= 0.9 * rep.predicted["B"]


def test_decay_vacuous_on_constant_background():
    traj, bg = make_run("constant:-1.0", classical(), T=1.0, N=32)
    rep = dg.compare_decay(traj, bg, classical())
    assert rep.passed is True
    assert "vacuous" in rep.notes


def test_decay_inconclusive_on_noisy_fit(neg_run):
    # a series the exponential model explains poorly must not pass or fail
    traj, bg = neg_run
    rng = np.random.default_rng(9)
    doctored = rebuild(traj, traj.snapshots)
    noise = np.exp(rng.normal(scale=1.5, size=traj.n_records))
    doctored.columns["fSA_sup"] = traj.columns["fSA_sup"] * noise
    rep = dg.compare_decay(doctored, bg, classical())
    assert rep.passed is None
    assert rep.measured["residual"] > 0.1


def test_u_bounds_flat_and_negative(neg_run, flat_run):
    traj, bg = neg_run
    assert dg.check_u_bounds(traj, bg, classical()).passed is True
    traj2, bg2 = flat_run
    rep = dg.check_u_bounds(traj2, bg2, classical())
    assert rep.passed is True
    assert abs(rep.measured["ratio_initial"] - 0.7 / 1.3) < 1e-12


def test_identities_pass_on_fixed_dt_run():
    traj, bg = make_run(NEG_BG, classical(), T=0.4, N=64, dt=2e-4, cadence=20,
                        stop_tol=0.0)
    rep = dg.check_evolution_identities(traj, bg, classical())
    assert rep.passed is True
    assert rep.measured["sigma_forms_gap"] < 1e-12


def test_lnhalf_passes_on_positive_run(pos_run):
    traj, _ = pos_run
    rep = dg.check_Lnhalf_monotone(traj)
    assert rep.passed is True


def test_positive_bounds_pass(pos_run):
    traj, bg = pos_run
    rep = dg.check_positive_S_bounds(traj, bg, expdecay(1.0))
    assert rep.passed is True
    assert "C taken as the observed supremum" in rep.notes
    assert rep.predicted["a_from_growth_certificate"] <= rep.measured["a_observed"]


def test_flat_identity_passes(flat_run):
    traj, bg = flat_run
    rep = dg.check_flat_identity(traj, bg)
    assert rep.passed is True
    assert rep.measured["max_abs_integral"] < 1e-12


def test_stationary_limit_passes(neg_run):
    traj, bg = neg_run
    rep = dg.check_stationary_limit(traj, bg, classical())
    assert rep.passed is True
    # f(x) = -x inverts exactly: the limit curvature is -A
    A_final = traj.columns["A"][-1]
    assert abs(rep.predicted["f_inverse_of_A"] + A_final) < 1e-9


def test_sobolev_info_positive(pos_run):
    traj, _ = pos_run
    rep = dg.sobolev_program_series(traj)
    assert rep.passed is None
    assert np.isfinite(rep.measured["final_integral"])


def test_rescale_equivalence_fixed_point():
    g = grid1d(N=32)
    bg = background_from_spec(g, "constant:-1.0")
    cfg = RunConfig(background=bg, f=classical(), u0=ScalarField.constant(g, 1.0),
                    T_final=0.5)
    rep = dg.check_rescale_equivalence(bg, classical(), cfg)
    assert rep.passed is True
    assert rep.measured["sup_gap"] < 1e-8


# ---------------------------------------------------------------------------
# Determinism and gates
# ---------------------------------------------------------------------------

def test_checker_reruns_bit_identical(neg_run):
    traj, bg = neg_run
    r1 = dg.check_minmax_principle(traj, bg, classical()).to_dict()
    r2 = dg.check_minmax_principle(traj, bg, classical()).to_dict()
    assert r1 == r2
    d1 = dg.compare_decay(traj, bg, classical()).to_dict()
    d2 = dg.compare_decay(traj, bg, classical()).to_dict()
    assert d1 == d2


def test_gates_report_inconclusive(neg_run, pos_run, flat_run):
    neg, neg_bg = neg_run
    pos, pos_bg = pos_run
    assert dg.compare_decay(pos, pos_bg, expdecay(1.0)).passed is None
    assert dg.check_Lnhalf_monotone(neg).passed is None
    assert dg.check_stationary_limit(pos, pos_bg, expdecay(1.0)).passed is None
    mixed_traj, mixed_bg = make_run("sinusoidal:0.0,0.2,0", classical(), T=0.02, N=32)
    assert dg.check_u_bounds(mixed_traj, mixed_bg, classical()).passed is None
    nn_cfg = RunConfig(background=neg_bg, f=classical(),
                       u0=ScalarField.constant(neg.grid, 1.0), T_final=0.1,
                       normalized=False, renormalize_volume=False, stop_tol=0.0)
    nn = run(nn_cfg)
    assert dg.check_minmax_principle(nn, neg_bg, classical()).passed is None


def test_run_checks_dispatch(neg_run):
    traj, bg = neg_run
    reports = dg.run_checks(traj, bg, classical(),
                            ["minmax", "decay", "u_bounds", "stationary"])
    assert [r.id for r in reports] == [
        "minmax_principle", "exponential_decay",
        "conformal_factor_bounds", "stationary_limit"]
    assert all(r.passed is True for r in reports)
    with pytest.raises(ValueError, match="unknown check"):
        dg.run_checks(traj, bg, classical(), ["nope"])


# ---------------------------------------------------------------------------
# Negative controls: every checker must flag a crafted violation
# ---------------------------------------------------------------------------

def test_minmax_fails_on_reversed_run(neg_run):
    traj, bg = neg_run
    rep = dg.check_minmax_principle(reverse_in_time(traj), bg, classical())
    assert rep.passed is False


def test_decay_fails_without_decay(neg_run):
    traj, bg = neg_run
    frozen = rebuild(traj, np.repeat(traj.snapshots[:1], traj.n_records, axis=0))
    rep = dg.compare_decay(frozen, bg, classical())
    assert rep.passed is False


def test_u_bounds_fails_outside_band(neg_run):
    traj, bg = neg_run
    inflated = rebuild(traj, traj.snapshots * np.linspace(1.0, 2.0, traj.n_records)[:, None])
    rep = dg.check_u_bounds(inflated, bg, classical())
    assert rep.passed is False


def test_identities_fail_on_tampered_snapshots():
    traj, bg = make_run(NEG_BG, classical(), T=0.4, N=64, dt=2e-4, cadence=20,
                        stop_tol=0.0)
    warp = 1.0 + 0.05 * np.linspace(0.0, 1.0, traj.n_records) ** 2
    rep = dg.check_evolution_identities(rebuild(traj, traj.snapshots * warp[:, None]),
                                        bg, classical())
    assert rep.passed is False


def test_lnhalf_fails_on_reversed_positive_run(pos_run):
    traj, _ = pos_run
    rep = dg.check_Lnhalf_monotone(reverse_in_time(traj))
    assert rep.passed is False


def test_positive_bounds_fail_on_collapsing_curvature(pos_run):
    traj, bg = pos_run
    g = traj.grid
    x = g.axis_coordinates(0)
    # amplitude grows fast enough to drive S_min toward 0 faster than exp(a t)
    snaps = []
    for k in range(traj.n_records):
        amp = 0.001 + 0.05 * (k / max(1, traj.n_records - 1))
        snaps.append(1.0 + amp * np.cos(3 * x))
    crafted = rebuild(traj, np.asarray(snaps), times=np.linspace(0.0, 40.0, traj.n_records))
    rep = dg.check_positive_S_bounds(crafted, bg, expdecay(1.0))
    assert rep.passed is False


def test_flat_identity_fails_when_misapplied(neg_run):
    traj, bg = neg_run
    rep = dg.check_flat_identity(traj, bg)
    assert rep.passed is False


def test_stationary_limit_fails_with_loose_stop():
    traj, bg = make_run(NEG_BG, classical(), T=20.0, N=64, stop_tol=0.1)
    assert traj.termination == "stationary"
    rep = dg.check_stationary_limit(traj, bg, classical())
    assert rep.passed is False


def test_rescale_comparison_detects_mismatch(neg_run):
    traj, _ = neg_run
    shifted = traj.snapshots * 1.01
    gap, count = dg.sup_deviation_on_times(traj.times, traj.snapshots,
                                           traj.times, shifted)
    assert count == traj.n_records
    assert gap > 1e-3


# ---------------------------------------------------------------------------
# Pointwise curvature-evolution consistency
# ---------------------------------------------------------------------------

def test_curvature_evolution_pointwise_consistency():
    # centered dS/dt vs -(n-1)(f'(S) lap_g S + f''(S) |grad S|_g^2) - S(f(S)-A)
    # with a nonlinear f so the chain-rule term is exercised; the defect
    # shrinks like h^2 once dt is small enough
    f = expdecay(1.0)
    defects = []
    for N in (32, 64):
        traj, bg = make_run(POS_BG, f, T=0.02, N=N, dt=2e-5, cadence=1,
                            stop_tol=0.0)
        k = traj.n_records // 2
        u = traj.snapshots[k]
        g = traj.grid
        st = ConformalState(ScalarField(g, u))
        S = scalar_curvature(bg, st)
        kern = _Kernel(bg, f, normalized=True)
        w = kern.weight(u)
        A = float((f.eval_f(S.values) * w).mean() / w.mean())
        lapg = conflow.metric_laplacian(bg, st, S).values
        gsq = power(u, -2.0) * grad_inner(S, S).values
        rhs = (-3.0 * (f.eval_fp(S.values) * lapg + f.eval_fpp(S.values) * gsq)
               - S.values * (f.eval_f(S.values) - A))
        Sm = scalar_curvature(bg, traj.state(k - 1)).values
        Sp = scalar_curvature(bg, traj.state(k + 1)).values
        dSdt = (Sp - Sm) / (traj.times[k + 1] - traj.times[k - 1])
        defects.append(np.abs(dSdt - rhs).max() / np.abs(rhs).max())
    assert defects[0] / defects[1] > 3.0
    assert defects[1] < 5e-3
