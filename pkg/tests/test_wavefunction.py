"""Field assembly, the residual ladder, and the 8-way convention scan.

The doctored trajectories here (FlatChain, a 1% alpha corruption) exist
to prove the residual actually measures something: a static field makes
the ladder refuse to report an order, and a small corruption of the
width function must blow the residual up by orders of magnitude.
"""

import cmath
import dataclasses
import math

import numpy as np
import pytest

from invosc.bessel import bessel_j, bessel_n
from invosc.errors import (FallToCenter, GridTooCoarse, Inconclusive,
                           NonFinite, NonPositiveArgument, OriginUndefined,
                           OutOfDomain, ZeroNorm)
from invosc.wavefunction import (CartesianGrid, ConventionFlags, ModeSpec,
                                 PolarGrid, ResidualReport, WaveField,
                                 assemble_psi, convention_scan,
                                 normalize_on_disk, order_from_coupling,
                                 sample_field, schrodinger_residual,
                                 sector_winding, theta_from_xy)

from conftest import SPAN, WINNER, make_chain, make_coeffs

RESIDUAL_GRID = PolarGrid(0.4, 8.0, 96, 96)
COARSE_STEPS = (4e-2, 2e-2, 1e-2)


class FlatChain:
    """Trajectory stub frozen at the identity: the field it assembles is
    static, so d psi / dt vanishes and the relative residual is exactly 1."""

    span = SPAN

    def beta(self, t):
        return 0.0

    def alpha(self, t):
        return 0.0 + 0.0j

    def mu(self, t):
        return 1.0 + 0.0j

    def phase(self, t):
        return 0.0 + 0.0j

    def digest(self):
        return "0" * 64


class ScaledAlpha:
    """Pass-through trajectory with alpha multiplied by a constant."""

    def __init__(self, base, factor):
        self._base = base
        self._factor = factor

    def beta(self, t):
        return self._base.beta(t)

    def alpha(self, t):
        return self._factor * self._base.alpha(t)

    def mu(self, t):
        return self._base.mu(t)

    def phase(self, t):
        return self._base.phase(t)

    @property
    def span(self):
        return self._base.span

    def digest(self):
        return self._base.digest()


# -- angles and orders -----------------------------------------------------------

def test_theta_runs_from_the_plus_y_axis():
    assert theta_from_xy(0.0, 1.0, 0.0) == 0.0
    assert theta_from_xy(1.0, 0.0, 0.0) == pytest.approx(math.pi / 2.0)
    assert theta_from_xy(-1.0, 0.0, 0.0) == pytest.approx(-math.pi / 2.0)
    # frame rotation adds beta (away from the branch cut)
    assert theta_from_xy(1.0, 0.0, 0.3) == pytest.approx(math.pi / 2.0 + 0.3)
    assert isinstance(theta_from_xy(0.5, 0.5, 0.1), float)


def test_theta_rejects_the_origin():
    with pytest.raises(OriginUndefined):
        theta_from_xy(0.0, 0.0, 0.0)
    with pytest.raises(OriginUndefined):
        theta_from_xy(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 0.2)


def test_order_from_coupling_values():
    assert order_from_coupling(0.0, 2) == 2.0
    assert order_from_coupling(0.0, -3) == 3.0
    assert order_from_coupling(1.5, 1) == 2.0
    assert order_from_coupling(0.32, 0) == pytest.approx(0.8, abs=1e-15)


def test_supercritical_attraction_is_rejected():
    with pytest.raises(FallToCenter):
        order_from_coupling(-1.0, 1)
    with pytest.raises(FallToCenter):
        ModeSpec.from_coupling(k=1.0, n=0, C=-0.5)


def test_sector_winding_opposes_the_signed_angular_number():
    assert sector_winding(ModeSpec(k=1.0, n=1, nu=1.0, angular_sign=+1)) == -1
    assert sector_winding(ModeSpec(k=1.0, n=2, nu=2.0, angular_sign=-1)) == +2
    assert sector_winding(ModeSpec(k=1.0, n=0, nu=0.0)) == 0


# -- convention flags -------------------------------------------------------------

def test_flag_labels_round_trip_all_eight():
    combos = ConventionFlags.all_combinations()
    assert len(combos) == 8
    assert len(set(combos)) == 8
    for flags in combos:
        assert ConventionFlags.from_label(flags.label()) == flags


def test_flag_enumeration_order_is_stable():
    combos = ConventionFlags.all_combinations()
    assert combos[0] == ConventionFlags(+1, 1.0, +1)
    assert combos[0] == ConventionFlags.literal()
    assert combos[-1] == ConventionFlags(-1, 0.5, -1)
    # sign varies slowest
    assert all(f.exponent_sign == +1 for f in combos[:4])
    assert all(f.exponent_sign == -1 for f in combos[4:])


def test_flag_label_spellings():
    assert ConventionFlags(-1, 0.5, +1).label() == "s=-1,h=1/2,branch=+"
    assert ConventionFlags.from_label("s=+1,h=0.5,branch=-1") == \
        ConventionFlags(+1, 0.5, -1)


def test_flag_parsing_rejects_garbage():
    for bad in ("s=+1,h=1", "s=+1,h=1,branch=+,extra=1", "s=2,h=1,branch=+",
                "s=+1,h=third,branch=+", "nonsense"):
        with pytest.raises(ValueError):
            ConventionFlags.from_label(bad)


def test_flag_field_validation():
    with pytest.raises(ValueError):
        ConventionFlags(exponent_sign=0)
    with pytest.raises(ValueError):
        ConventionFlags(exponent_half=0.25)
    with pytest.raises(ValueError):
        ConventionFlags(alpha_branch=2)


def test_mode_spec_validation():
    with pytest.raises(ValueError):
        ModeSpec(k=0.0, n=1, nu=1.0)
    with pytest.raises(ValueError):
        ModeSpec(k=-2.0, n=1, nu=1.0)
    with pytest.raises(ValueError):
        ModeSpec(k=1.0, n=1.5, nu=1.0)
    with pytest.raises(ValueError):
        ModeSpec(k=1.0, n=1, nu=-0.5)
    with pytest.raises(ValueError):
        ModeSpec(k=1.0, n=1, nu=1.0, angular_sign=0)


def test_mode_describe_names_the_conventions(mode_c15):
    assert mode_c15.nu == 2.0
    assert "s=-1,h=1/2,branch=+" in mode_c15.describe()


# -- grids -------------------------------------------------------------------------

def test_centered_cartesian_grid_geometry():
    g = CartesianGrid.centered(6.0, 128)
    assert g.shape == (128, 128)
    assert g.spacing() == (12.0 / 127.0, 12.0 / 127.0)
    xs, ys = g.axes()
    assert xs[0] == -6.0 and xs[-1] == 6.0 and len(ys) == 128
    assert g.outer_radius() == pytest.approx(math.hypot(6.0, 6.0))
    # even point count keeps the origin off-node
    assert not np.any(xs == 0.0)


def test_cartesian_active_mask_trims_edges_and_disk():
    g = CartesianGrid.centered(3.0, 16)
    assert g.active_mask().sum() == 12 * 12
    masked = g.active_mask(rho_min=1.0)
    assert masked.sum() < 12 * 12
    X, Y = g.xy_mesh()
    assert np.all(np.hypot(X, Y)[masked] >= 1.0)


def test_polar_grid_geometry():
    g = PolarGrid(0.4, 8.0, 96, 64)
    assert g.shape == (96, 64)
    drho, dphi = g.spacing()
    assert drho == pytest.approx(7.6 / 95.0)
    assert dphi == pytest.approx(2.0 * math.pi / 64.0)
    rho, phi = g.axes()
    assert rho[0] == 0.4 and rho[-1] == 8.0
    # no duplicate angular endpoint
    assert phi[-1] == pytest.approx(2.0 * math.pi * 63.0 / 64.0)
    assert g.outer_radius() == 8.0


def test_polar_disk_grid_masks_the_degenerate_ring():
    g = PolarGrid(0.0, 4.0, 16, 8)
    mask = g.active_mask()
    assert mask.sum() == 12 * 8
    rho, _ = g.axes()
    assert not np.any(mask[rho == 0.0, :])


def test_grid_refinement_scales_point_counts():
    assert PolarGrid(0.4, 8.0, 16, 24).refined().shape == (32, 48)
    g = CartesianGrid.centered(6.0, 16).refined(3)
    assert g.shape == (48, 48)
    assert (g.x_min, g.x_max) == (-6.0, 6.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        CartesianGrid(1.0, -1.0, 16, -1.0, 1.0, 16)
    with pytest.raises(ValueError):
        CartesianGrid.centered(1.0, 4)
    with pytest.raises(ValueError):
        CartesianGrid.centered(1.0, 16, rho_min=-0.1)
    with pytest.raises(ValueError):
        PolarGrid(-0.1, 8.0, 16, 16)
    with pytest.raises(ValueError):
        PolarGrid(8.0, 8.0, 16, 16)
    with pytest.raises(ValueError):
        PolarGrid(0.4, 8.0, 4, 16)


# -- assembly ----------------------------------------------------------------------

def test_origin_limit_of_the_regular_sector():
    # nu = 0 with n = 0: the radial part tends to J_0(0) = 1, leaving
    # the amplitude times the pure phase factor.
    mode = ModeSpec.from_coupling(k=1.0, n=0, C=0.0, conventions=WINNER)
    assert mode.nu == 0.0
    val = assemble_psi(mode, FlatChain(), 0.0, 0.0, 0.5)
    assert val == 1.0 + 0.0j


def test_origin_zero_for_steep_orders(mode_c15, chain_c15):
    assert assemble_psi(mode_c15, chain_c15, 0.0, 0.0, 0.5) == 0.0


def test_origin_undefined_for_shallow_fractional_order():
    mode = ModeSpec.from_coupling(k=1.0, n=0, C=0.32, conventions=WINNER)
    with pytest.raises(OriginUndefined):
        assemble_psi(mode, FlatChain(), 0.0, 0.0, 0.5)


def test_origin_undefined_with_second_kind_amplitude():
    mode = ModeSpec.from_coupling(k=1.0, n=1, C=1.5, amp_second=0.25 + 0j)
    with pytest.raises(OriginUndefined):
        assemble_psi(mode, FlatChain(), 0.0, 0.0, 0.5)


def test_second_kind_needs_a_real_scale_factor(chain_c15):
    # the default chain couples mu to -i alpha / m, so mu(t) leaves the
    # real axis immediately; N_nu of a complex argument is refused
    mode = ModeSpec.from_coupling(k=1.0, n=1, C=1.5, amp_second=0.25 + 0j,
                                  conventions=WINNER)
    with pytest.raises(NonPositiveArgument):
        assemble_psi(mode, chain_c15, 1.0, 0.5, 0.5)


def test_second_kind_composition_with_real_scale():
    mode = ModeSpec.from_coupling(k=1.0, n=1, C=1.5, amp_second=0.25 + 0j,
                                  conventions=WINNER)
    rho = math.hypot(1.1, 0.6)
    got = assemble_psi(mode, FlatChain(), 1.1, 0.6, 0.3)
    theta = theta_from_xy(1.1, 0.6, 0.0)
    radial = bessel_j(2.0, rho) + 0.25 * bessel_n(2.0, rho)
    assert got == pytest.approx(radial * cmath.exp(1j * theta), rel=1e-14)


def test_scalar_and_broadcast_shapes(mode_c15, chain_c15):
    val = assemble_psi(mode_c15, chain_c15, 1.0, 2.0, 0.5)
    assert isinstance(val, complex)
    xs = np.linspace(0.5, 2.0, 4)[:, None]
    ys = np.linspace(-1.0, 1.0, 3)[None, :]
    out = assemble_psi(mode_c15, chain_c15, xs, ys, 0.5)
    assert out.shape == (4, 3)
    assert out[1, 2] == assemble_psi(mode_c15, chain_c15, float(xs[1, 0]),
                                     float(ys[0, 2]), 0.5)


def test_amplitude_linearity_is_exact(mode_c15, chain_c15):
    doubled = dataclasses.replace(mode_c15, amp_first=2.0 + 0j)
    v1 = assemble_psi(mode_c15, chain_c15, 1.3, -0.4, 0.5)
    v2 = assemble_psi(doubled, chain_c15, 1.3, -0.4, 0.5)
    assert v2 == 2.0 * v1


def test_rigid_rotation_shifts_only_the_angular_phase(mode_c15, chain_c15):
    x0, y0, delta, t = 1.1, 0.7, 0.3, 0.5
    xr = x0 * math.cos(delta) - y0 * math.sin(delta)
    yr = x0 * math.sin(delta) + y0 * math.cos(delta)
    ratio = (assemble_psi(mode_c15, chain_c15, xr, yr, t)
             / assemble_psi(mode_c15, chain_c15, x0, y0, t))
    expect = cmath.exp(-1j * mode_c15.angular_sign * mode_c15.n * delta)
    assert abs(ratio - expect) < 1e-10


def test_zero_coupling_reduces_to_integer_order_composition():
    coeffs = make_coeffs(C=0.0)
    traj = make_chain(coeffs)
    mode = ModeSpec.from_coupling(k=1.0, n=2, C=0.0, conventions=WINNER)
    assert mode.nu == 2.0
    xs = np.array([0.5, 1.2, 2.0])
    ys = np.array([0.3, -0.8, 1.1])
    t = 0.6
    got = assemble_psi(mode, traj, xs, ys, t)
    rho = np.hypot(xs, ys)
    alpha = complex(traj.alpha(t))
    mu = complex(traj.mu(t))
    f = complex(traj.phase(t))
    theta = theta_from_xy(xs, ys, float(traj.beta(t)))
    sh = WINNER.exponent_sign * WINNER.exponent_half
    hand = bessel_j(2.0, rho / mu) * np.exp(sh * alpha * rho * rho
                                            + 2j * theta - 1j * f)
    assert np.max(np.abs(got - hand)) < 1e-12


def test_zero_field_keeps_the_frame_and_angle_fixed():
    coeffs = make_coeffs(B=0.0)
    traj = make_chain(coeffs)
    # beta integrates a vanishing rate and must come back exactly 0.0
    assert traj.beta(0.37) == 0.0
    assert traj.beta(1.0) == 0.0
    X, Y = CartesianGrid.centered(3.0, 16).xy_mesh()
    assert np.array_equal(theta_from_xy(X, Y, 0.0), np.arctan2(X, Y))


# -- sampled fields -----------------------------------------------------------------

def test_sample_field_shape_and_provenance(mode_c15, chain_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    field = sample_field(mode_c15, chain_c15, grid, (0.0, 0.5))
    assert field.values.shape == (2, 16, 16)
    assert field.times == (0.0, 0.5)
    assert len(field.traj_digest) == 64


def test_sample_field_propagates_origin_policy():
    mode = ModeSpec.from_coupling(k=1.0, n=0, C=0.32, conventions=WINNER)
    disk = PolarGrid(0.0, 4.0, 16, 16)
    with pytest.raises(OriginUndefined):
        sample_field(mode, FlatChain(), disk, (0.5,))


def test_wave_field_validation(mode_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    good = np.zeros((1, 16, 16), dtype=complex)
    with pytest.raises(ValueError):
        WaveField(grid=grid, times=(0.0, 0.5), values=good, mode=mode_c15)
    bad = good.copy()
    bad[0, 3, 3] = complex(math.inf, 0.0)
    with pytest.raises(NonFinite):
        WaveField(grid=grid, times=(0.0,), values=bad, mode=mode_c15)


def test_wave_field_csv_layout(tmp_path, mode_c15, chain_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    field = sample_field(mode_c15, chain_c15, grid, (0.0, 0.5))
    path = tmp_path / "field.csv"
    field.write_csv(path, digest="a" * 64)
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_digest: " + "a" * 64
    assert lines[1].startswith("# mode: ")
    assert lines[2].startswith("# grid: ")
    assert lines[3] == "x,y,t,re_psi,im_psi,abs2"
    assert len(lines) == 4 + 2 * 16 * 16
    x, y, t, re, im, ab2 = map(float, lines[4].split(","))
    assert ab2 == pytest.approx(re * re + im * im, rel=1e-15)


# -- residual ladder ----------------------------------------------------------------

def test_known_plane_wave_passes_the_operator():
    # free particle: psi = exp[i(p x + q y - E t)] solves the equation
    # exactly, so the only residual is stencil truncation
    coeffs = make_coeffs(w=0.0, B=0.0, C=0.0)
    p, q = 1.3, -0.7
    energy = 0.5 * (p * p + q * q)

    def plane(X, Y, t):
        return np.exp(1j * (p * X + q * Y - energy * t))

    grid = CartesianGrid.centered(0.016, 33)
    rep = schrodinger_residual(None, None, coeffs, grid, (0.5,),
                               steps=(2e-4,), psi=plane)
    assert rep.rel_inf < 3e-8


def test_temporal_ladder_converges_at_second_order(mode_c15, chain_c15,
                                                   coeffs_c15):
    rep = schrodinger_residual(mode_c15, chain_c15, coeffs_c15,
                               RESIDUAL_GRID, (0.4,), steps=COARSE_STEPS)
    values = [r.rel_inf for r in rep.rungs]
    assert values == sorted(values, reverse=True)
    assert rep.rel_inf < 3e-4
    assert 1.7 < rep.order < 2.3
    assert rep.refinement == "temporal"
    assert len(rep.per_time) == 1


def test_spatial_ladder_converges_at_fourth_order(mode_c15, chain_c15,
                                                  coeffs_c15):
    rep = schrodinger_residual(mode_c15, chain_c15, coeffs_c15,
                               PolarGrid(0.4, 8.0, 48, 48), (0.4,),
                               refinement="spatial", levels=3)
    assert 3.4 < rep.order < 4.6
    r = [rung.rel_inf for rung in rep.rungs]
    assert 16.0 * 0.7 < r[0] / r[1] < 16.0 * 1.3
    assert 16.0 * 0.7 < r[1] / r[2] < 16.0 * 1.3


def test_corrupted_width_function_is_loud(mode_c15, chain_c15, coeffs_c15):
    step = (2e-3,)
    clean = schrodinger_residual(mode_c15, chain_c15, coeffs_c15,
                                 RESIDUAL_GRID, (0.4,), steps=step)
    bad = schrodinger_residual(mode_c15, ScaledAlpha(chain_c15, 1.01),
                               coeffs_c15, RESIDUAL_GRID, (0.4,), steps=step)
    assert bad.rel_inf > 100.0 * clean.rel_inf


def test_literal_sign_reading_fails_the_operator(mode_c15, chain_c15,
                                                 coeffs_c15):
    literal = dataclasses.replace(mode_c15,
                                  conventions=ConventionFlags.literal())
    clean = schrodinger_residual(mode_c15, chain_c15, coeffs_c15,
                                 RESIDUAL_GRID, (0.4,), steps=(4e-2,))
    bad = schrodinger_residual(literal, chain_c15, coeffs_c15,
                               RESIDUAL_GRID, (0.4,), steps=(4e-2,))
    assert bad.rel_inf > 10.0 * clean.rel_inf


def test_static_field_fails_the_ladder_with_report(mode_c15, coeffs_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    with pytest.raises(GridTooCoarse) as info:
        schrodinger_residual(mode_c15, FlatChain(), coeffs_c15, grid,
                             (0.5,), steps=(8e-3, 4e-3))
    report = info.value.report
    assert report.order is None
    assert len(report.rungs) == 2
    # i d/dt of a static field is zero, so the residual IS the H norm
    assert all(r.rel_inf == 1.0 for r in report.rungs)


def test_residual_stencil_must_stay_inside_the_span(mode_c15, chain_c15,
                                                    coeffs_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    with pytest.raises(OutOfDomain):
        schrodinger_residual(mode_c15, chain_c15, coeffs_c15, grid, (1.0,),
                             steps=(8e-3,))
    with pytest.raises(OutOfDomain):
        schrodinger_residual(mode_c15, chain_c15, coeffs_c15, grid, (0.0,),
                             steps=(8e-3,))


def test_residual_argument_validation(mode_c15, chain_c15, coeffs_c15):
    grid = PolarGrid(0.4, 8.0, 16, 16)
    with pytest.raises(ValueError):
        schrodinger_residual(mode_c15, chain_c15, coeffs_c15, grid, (0.5,),
                             refinement="sideways")
    with pytest.raises(ValueError):
        schrodinger_residual(mode_c15, chain_c15, coeffs_c15, grid, (0.5,),
                             refinement="spatial", levels=0)
    with pytest.raises(ValueError):
        schrodinger_residual(mode_c15, chain_c15, coeffs_c15, grid, (0.5,),
                             steps=(0.0,))
    with pytest.raises(ValueError):
        schrodinger_residual(None, None, coeffs_c15, grid, (0.5,))


def test_residual_report_formatting(tmp_path, mode_c15, chain_c15,
                                    coeffs_c15):
    rep = schrodinger_residual(mode_c15, chain_c15, coeffs_c15,
                               RESIDUAL_GRID, (0.4, 0.6), steps=(4e-2, 2e-2))
    line = rep.summary_line()
    assert "levels:2" in line and "refinement:temporal" in line
    assert f"order:{rep.order:.4f}" in line
    path = tmp_path / "ladder.csv"
    rep.write_csv(path, digest="b" * 64)
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_digest: " + "b" * 64
    assert lines[2] == "level,dt,spacing,rel_inf,rel_l2"
    assert lines[3].startswith("0,")
    # two rung rows, then the per-time block for the finest level
    assert lines[5] == "time,rel_inf,rel_l2,hnorm_inf,hnorm_l2"
    assert len(lines) == 6 + 2

    bare = ResidualReport(rungs=rep.rungs, order=None, refinement="temporal",
                          grid_desc="g", times=(0.4,), rho_min=0.4)
    assert "order:none" in bare.summary_line()


# -- convention scan -----------------------------------------------------------------

@pytest.fixture(scope="module")
def scan_outcome(mode_c15, coeffs_c15):
    def factory(branch):
        return make_chain(coeffs_c15, branch=branch)
    return convention_scan(mode_c15, factory, coeffs_c15, RESIDUAL_GRID,
                           (0.4,), step=4e-2)


def test_scan_selects_the_decaying_half_exponent(scan_outcome):
    assert scan_outcome.winner == WINNER
    assert scan_outcome.margin > 10.0
    assert len(scan_outcome.rows) == 8


def test_scan_winner_has_a_decaying_envelope(scan_outcome):
    by_flags = {row.flags: row for row in scan_outcome.rows}
    assert by_flags[scan_outcome.winner].envelope_decays
    assert not by_flags[ConventionFlags.literal()].envelope_decays


def test_scan_table_csv_marks_one_winner(tmp_path, scan_outcome):
    path = tmp_path / "scan.csv"
    scan_outcome.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# winner: s=-1,h=1/2,branch=+ margin: ")
    assert lines[1] == ("exponent_sign,exponent_half,alpha_branch,"
                        "rel_inf,rel_l2,envelope_decays,winner")
    rows = [line.split(",") for line in lines[2:]]
    assert len(rows) == 8
    assert sum(int(r[-1]) for r in rows) == 1


def test_indistinguishable_readings_raise_inconclusive(mode_c15, coeffs_c15):
    # with alpha frozen at 0 the eight readings assemble the same field,
    # so no residual can separate them
    def factory(branch):
        return FlatChain()

    grid = PolarGrid(0.4, 8.0, 16, 16)
    with pytest.raises(Inconclusive) as info:
        convention_scan(mode_c15, factory, coeffs_c15, grid, (0.5,),
                        step=8e-3)
    rows = info.value.rows
    assert len(rows) == 8
    assert len({row.rel_inf for row in rows}) == 1


# -- normalization --------------------------------------------------------------------

def test_disk_norm_exact_for_constant_field_on_polar_grid(mode_c15):
    grid = PolarGrid(0.0, 8.0, 64, 16)
    values = np.full((1, 64, 16), 2.0 + 0.0j)
    field = WaveField(grid=grid, times=(0.0,), values=values, mode=mode_c15)
    out, norm = normalize_on_disk(field, 8.0)
    # 2 pi * integral of |2|^2 rho d rho over [0, 8]: trapezoid is exact
    # for the linear integrand
    assert norm == pytest.approx(256.0 * math.pi, rel=1e-13)
    assert out.values[0, 0, 0] == pytest.approx(2.0 / math.sqrt(norm))
    assert out.mode.amp_first == pytest.approx(
        mode_c15.amp_first / math.sqrt(norm))
    # renormalizing the result is then the identity
    again, unit = normalize_on_disk(out, 8.0)
    assert unit == pytest.approx(1.0, rel=1e-12)


def test_disk_norm_on_cartesian_grid_is_self_consistent(mode_c15):
    grid = CartesianGrid.centered(2.0, 32)
    values = np.full((1, 32, 32), 1.0 + 0.0j)
    field = WaveField(grid=grid, times=(0.0,), values=values, mode=mode_c15)
    out, norm = normalize_on_disk(field, 1.5)
    assert norm == pytest.approx(math.pi * 1.5 ** 2, rel=0.05)
    _, unit = normalize_on_disk(out, 1.5)
    assert unit == pytest.approx(1.0, rel=1e-12)


def test_zero_field_has_no_norm_to_fix(mode_c15):
    grid = PolarGrid(0.0, 8.0, 16, 16)
    values = np.zeros((1, 16, 16), dtype=complex)
    field = WaveField(grid=grid, times=(0.0,), values=values, mode=mode_c15)
    with pytest.raises(ZeroNorm):
        normalize_on_disk(field, 8.0)
