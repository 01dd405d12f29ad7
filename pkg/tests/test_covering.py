"""Balance functions, critical radii, and the interval covering pipeline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gnlab.covering as cov
import gnlab.funcspace as fs
from gnlab.errors import (InvariantError, NoCrossingError, ParameterError)

SPEC = cov.BalanceSpec(ks=(0, 1, 2), q=2, m=3, r="inf")

# frozen crossing radius for the standard bump at x = 1/4 on the 4097
# grid; an independent sign bracket around it is asserted below
RADIUS_AT_QUARTER = 0.04200615906801902


class TestBalanceFunctions:
    def test_alpha_small_window_asymptotic(self, bump_4097):
        """alpha(h) -> (2h)^kbar |v(x)|^{1/kappa} as h -> 0."""
        u = bump_4097
        v = u.stack[0] * u.stack[1] * u.stack[2]
        ix = round(0.25 / u.dx)
        h = 1e-4
        predicted = (2 * h) * abs(v[ix]) ** (1 / 3)
        actual = cov.balance_alpha(u, 0.25, h, SPEC)
        assert actual == pytest.approx(predicted, rel=1e-4)

    def test_beta_small_window_asymptotic(self, bump_4097):
        u = bump_4097
        ix = round(0.25 / u.dx)
        h = 1e-4
        pad = int(h / u.dx) + 2
        local_sup = np.max(np.abs(u.stack[3][ix - pad:ix + pad]))
        predicted = (2 * h) ** 3 * local_sup
        actual = cov.balance_beta(u, 0.25, h, SPEC)
        assert actual == pytest.approx(predicted, rel=1e-2)

    def test_alpha_monotone_in_window(self, bump_4097):
        hs = np.geomspace(1e-4, 0.2, 24)
        vals = [cov.balance_alpha(bump_4097, 0.25, h, SPEC) for h in hs]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_window_integrals_survive_support_tails(self, bump_4097):
        # near the support edge the local product mass is ~1e-21 of the
        # total; the windowed quadrature must still resolve it
        x = 0.912109375
        r = cov.critical_radius(bump_4097, x, SPEC)
        assert 0 < r < 0.5
        a = cov.balance_alpha(bump_4097, x, r, SPEC)
        b = cov.balance_beta(bump_4097, x, r, SPEC)
        assert abs(a - b) <= 1e-10 * max(a, b)


class TestCriticalRadius:
    def test_frozen_value_with_sign_bracket(self, bump_4097):
        r = cov.critical_radius(bump_4097, 0.25, SPEC)
        assert r == pytest.approx(RADIUS_AT_QUARTER, rel=1e-12)
        below = (cov.balance_alpha(bump_4097, 0.25, r * 0.9999, SPEC)
                 - cov.balance_beta(bump_4097, 0.25, r * 0.9999, SPEC))
        above = (cov.balance_alpha(bump_4097, 0.25, r * 1.0001, SPEC)
                 - cov.balance_beta(bump_4097, 0.25, r * 1.0001, SPEC))
        assert below > 0 > above

    def test_dilation_halves_radius(self, bump_4097):
        half = fs.sample(fs.Rescaled(fs.BumpChi(), 0.0, 0.5), (0.0, 0.5),
                         4097, 3)
        r = cov.critical_radius(bump_4097, 0.25, SPEC)
        rd = cov.critical_radius(half, 0.125, SPEC)
        assert rd == pytest.approx(r / 2.0, rel=5e-8)

    def test_rejects_points_outside_working_set(self, bump_4097):
        # the product u u' u'' vanishes at the symmetry point
        with pytest.raises(ParameterError):
            cov.critical_radius(bump_4097, 0.5, SPEC)
        with pytest.raises(ParameterError):
            cov.critical_radius(bump_4097, 1.5, SPEC)

    def test_no_crossing_for_vanishing_top_derivative(self):
        # quadratic: the third derivative is identically zero, so the
        # top-order side can never catch the product side
        quad = fs.Polynomial((0.0, 0.0, 1.0))
        g = fs.sample(quad, (0.0, 1.0), 2049, 3)
        with pytest.raises(NoCrossingError):
            cov.critical_radius(g, 0.5, SPEC)


class TestBesicovitchSelection:
    def test_trivial_cases(self):
        assert cov.besicovitch_select(np.zeros(0), np.zeros(0)) == []
        assert cov.besicovitch_select(np.array([0.3]), np.array([0.1])) == [0]

    def test_nested_intervals_pick_the_widest(self):
        centers = np.array([0.5, 0.52, 0.48])
        radii = np.array([0.2, 0.02, 0.01])
        assert cov.besicovitch_select(centers, radii) == [0]

    def test_disjoint_intervals_all_selected(self):
        centers = np.array([0.1, 0.5, 0.9])
        radii = np.array([0.05, 0.05, 0.05])
        assert sorted(cov.besicovitch_select(centers, radii)) == [0, 1, 2]

    @given(st.lists(st.tuples(st.floats(min_value=0.0, max_value=1.0),
                              st.floats(min_value=1e-3, max_value=0.3)),
                    min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_selection_covers_centers_with_bounded_overlap(self, pairs):
        centers = np.array([c for c, _ in pairs])
        radii = np.array([r for _, r in pairs])
        picked = cov.besicovitch_select(centers, radii)
        ivs = np.stack([centers[picked] - radii[picked],
                        centers[picked] + radii[picked]], axis=1)
        # every input center lies inside some selected interval
        inside = (centers[:, None] >= ivs[None, :, 0]) & \
                 (centers[:, None] <= ivs[None, :, 1])
        assert inside.any(axis=1).all()
        assert cov.overlap_profile(ivs) <= 4

    def test_overlap_profile_counts_stacked_intervals(self):
        ivs = np.array([[0.0, 1.0], [0.1, 0.9], [0.2, 0.8]])
        assert cov.overlap_profile(ivs) == 3


class TestBuildCover:
    def test_bump_cover_shape_and_quality(self, bump_4097):
        rep = cov.build_cover(bump_4097, SPEC, e_resolution=2049)
        assert rep.max_overlap <= 4
        assert rep.deficit_cells == 0
        assert float(np.max(rep.balance_residuals)) <= 1e-6
        assert rep.intervals.shape == (rep.centers.size, 2)
        assert len(rep.centers) == 27

    @pytest.mark.parametrize("name,counts", [
        ("bumpchi", (27, 27, 27)),
        ("sinebump3", (37, 37, 39)),
    ])
    def test_frozen_interval_counts(self, name, counts):
        u = fs.sample(fs.corpus_function(name), (0.0, 1.0), 8193, 3)
        got = tuple(len(cov.build_cover(u, SPEC, e_resolution=res).centers)
                    for res in (2049, 4097, 8193))
        assert got == counts

    def test_deficit_never_grows_under_refinement(self):
        u = fs.sample(fs.corpus_function("sinebump7"), (0.0, 1.0), 8193, 3)
        deficits = [cov.build_cover(u, SPEC, e_resolution=res).deficit_cells
                    for res in (2049, 4097, 8193)]
        assert all(a >= b for a, b in zip(deficits, deficits[1:]))

    def test_bounded_mode(self):
        u = fs.sample(fs.BumpChi(), (0.0, 1.0), 4097, 2)
        spec = cov.BalanceSpec(ks=(0, 1), q=2, m=2, r="inf", mode="bounded")
        rep = cov.build_cover(u, spec, e_resolution=1025)
        assert len(rep.centers) == 40
        assert rep.max_overlap <= 4
        assert rep.deficit_cells == 0

    def test_real_line_mode_needs_room_below_top_order(self):
        u = fs.sample(fs.BumpChi(), (0.0, 1.0), 1025, 3)
        bad = cov.BalanceSpec(ks=(2, 2), q=2, m=3, r="inf")
        with pytest.raises(ParameterError):
            cov.build_cover(u, bad)

    def test_resolution_bounds(self, bump_4097):
        with pytest.raises(ParameterError):
            cov.build_cover(bump_4097, SPEC, e_resolution=1)
        with pytest.raises(ParameterError):
            cov.build_cover(bump_4097, SPEC, e_resolution=5000)

    def test_zero_function_gives_empty_cover(self):
        g = fs.GridFunction(0.0, 1.0, np.zeros((4, 1025)))
        rep = cov.build_cover(g, SPEC)
        assert rep.centers.size == 0
        assert rep.deficit_cells == 0

    def test_report_serialization(self, bump_4097):
        rep = cov.build_cover(bump_4097, SPEC, e_resolution=513)
        d = rep.to_dict()
        assert isinstance(d["meta"]["alpha_beta"], list)
        assert len(d["centers"]) == len(rep.centers)
        rows = rep.csv_rows()
        assert len(rows) == len(rep.centers)
        assert all(len(r) == 5 for r in rows)


class TestReportInvariants:
    def test_rejects_nonpositive_radii(self):
        with pytest.raises(InvariantError):
            cov.CoverReport(np.array([0.5]), np.array([0.0]),
                            np.array([[0.5, 0.5]]), 1, 0, 0.0,
                            np.array([0.0]))

    def test_rejects_excess_overlap(self):
        with pytest.raises(InvariantError):
            cov.CoverReport(np.array([0.5]), np.array([0.1]),
                            np.array([[0.4, 0.6]]), 5, 0, 0.0,
                            np.array([0.0]))

    def test_rejects_unbalanced_intervals(self):
        with pytest.raises(InvariantError):
            cov.CoverReport(np.array([0.5]), np.array([0.1]),
                            np.array([[0.4, 0.6]]), 1, 0, 0.0,
                            np.array([1e-3]))
