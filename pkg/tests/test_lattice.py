import math

import numpy as np
import pytest

from isingcft import lattice as lat
from isingcft.numerics import pfaffian

BETAS = (0.0, 0.3, lat.CRITICAL_BETA)


def all_small_geometries():
    out = []
    for m in range(0, 4):
        for n in range(1, 13):
            if (2 * m + 1) * (2 * n + 1) <= 25:
                out.append((m, n))
    return out


class TestGeometry:
    def test_guards(self):
        with pytest.raises(ValueError):
            lat.StripGeometry(M=-1, N=1, beta=0.1)
        with pytest.raises(ValueError):
            lat.StripGeometry(M=1, N=0, beta=0.1)
        with pytest.raises(ValueError):
            lat.StripGeometry(M=7, N=1, beta=0.1)  # 2^15 > 2^13

    def test_critical_beta_value(self):
        assert lat.CRITICAL_BETA == pytest.approx(0.5 * math.log(1 + math.sqrt(2)))

    def test_fermion_columns(self):
        g = lat.StripGeometry(M=2, N=1, beta=0.1)
        assert g.fermion_columns == [-1.5, -0.5, 0.5, 1.5]


class TestSpinAndClifford:
    def test_m0_spin_operator(self):
        fam = lat.build_spin_and_clifford(lat.StripGeometry(M=0, N=1, beta=0.1))
        assert np.array_equal(fam.sigma[0], np.diag([1.0, -1.0]))

    def test_spin_is_involution(self):
        g = lat.StripGeometry(M=1, N=1, beta=0.1)
        fam = lat.build_spin_and_clifford(g)
        for s in fam.sigma.values():
            assert np.array_equal(s @ s, np.eye(g.dim))

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_anticommutation_relations_exact(self, m):
        g = lat.StripGeometry(M=m, N=1, beta=0.1)
        fam = lat.build_spin_and_clifford(g)
        ps, qs = list(fam.p.values()), list(fam.q.values())
        eye = np.eye(g.dim)
        dev = 0.0
        for i, a in enumerate(ps):
            for j, b in enumerate(ps):
                dev = max(dev, np.max(np.abs(a @ b + b @ a - (2.0 * eye if i == j else 0))))
        for i, a in enumerate(qs):
            for j, b in enumerate(qs):
                dev = max(dev, np.max(np.abs(a @ b + b @ a - (2.0 * eye if i == j else 0))))
        for a in ps:
            for b in qs:
                dev = max(dev, np.max(np.abs(a @ b + b @ a)))
        assert dev <= 1e-12

    def test_index_ranges(self):
        g = lat.StripGeometry(M=2, N=1, beta=0.2)
        fam = lat.build_spin_and_clifford(g)
        assert sorted(fam.p) == [j - 0.5 for j in range(-2, 3)]
        assert sorted(fam.q) == [j + 0.5 for j in range(-2, 3)]


class TestTransferMatrices:
    def test_v1_identity_at_zero_beta(self):
        tm = lat.transfer_matrices(lat.StripGeometry(M=1, N=1, beta=0.0))
        assert np.allclose(tm.v1, np.eye(8))

    def test_v2plus_row_sums_free_interior(self):
        tm = lat.transfer_matrices(lat.StripGeometry(M=1, N=1, beta=0.0))
        assert np.allclose(tm.v2plus.sum(axis=1), 2.0)

    def test_vm_symmetric_positive(self):
        tm = lat.transfer_matrices(lat.StripGeometry(M=1, N=1, beta=0.4))
        assert np.allclose(tm.vm, tm.vm.T)
        assert np.all(np.linalg.eigvalsh(tm.vm) > 0)

    def test_v2plus_boundary_pinning(self):
        g = lat.StripGeometry(M=1, N=1, beta=0.7)
        tm = lat.transfer_matrices(g)
        rows = lat._row_configurations(g)
        for i, r in enumerate(rows):
            for j, s in enumerate(rows):
                if r[0] != s[0] or r[-1] != s[-1]:
                    assert tm.v2plus[i, j] == 0.0
                else:
                    assert tm.v2plus[i, j] == pytest.approx(math.exp(g.beta * r[1] * s[1]))


class TestPartitionFunction:
    def test_free_case_counts_interior_configurations(self):
        # (M, N) = (1, 1): one free interior spin, so Z = 2
        g = lat.StripGeometry(M=1, N=1, beta=0.0)
        assert lat.partition_function(g) == pytest.approx(2.0)
        assert lat.partition_function_enum(g) == pytest.approx(2.0)

    @pytest.mark.parametrize("m,n", all_small_geometries())
    @pytest.mark.parametrize("beta", BETAS)
    def test_transfer_matrix_equals_enumeration(self, m, n, beta):
        g = lat.StripGeometry(M=m, N=n, beta=beta)
        tm_val = lat.partition_function(g)
        enum_val = lat.partition_function_enum(g)
        assert abs(tm_val - enum_val) <= 1e-9 * abs(enum_val)

    def test_enum_guard(self):
        with pytest.raises(ValueError):
            lat.partition_function_enum(lat.StripGeometry(M=3, N=3, beta=0.1))


class TestFermionCorrelators:
    def setup_method(self):
        self.geom = lat.StripGeometry(M=2, N=3, beta=lat.CRITICAL_BETA)

    def test_coincident_points_anticommutator(self):
        v = lat.lattice_fermion_correlator(self.geom, [(0.5, 0), (0.5, 0)])
        assert v == pytest.approx(2.0 * lat.A_PSI**2, abs=1e-12)

    def test_antisymmetry_equal_row(self):
        a = lat.lattice_fermion_correlator(self.geom, [(-0.5, 0), (1.5, 0)])
        b = lat.lattice_fermion_correlator(self.geom, [(1.5, 0), (-0.5, 0)])
        assert a == pytest.approx(-b, abs=1e-14)

    def test_antisymmetry_across_rows(self):
        a = lat.lattice_fermion_correlator(self.geom, [(-0.5, 1), (1.5, -1)])
        b = lat.lattice_fermion_correlator(self.geom, [(1.5, -1), (-0.5, 1)])
        assert a == pytest.approx(-b, abs=1e-14)

    def test_odd_count_rejected(self):
        with pytest.raises(ValueError):
            lat.lattice_fermion_correlator(self.geom, [(0.5, 0)])

    def test_row_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            lat.lattice_fermion_correlator(self.geom, [(0.5, 3), (1.5, 0)])

    def test_bad_column_rejected(self):
        with pytest.raises(ValueError):
            lat.lattice_fermion_correlator(self.geom, [(0.0, 0), (0.5, 0)])

    @pytest.mark.parametrize("pts", [
        [(-1.5, 0), (-0.5, 1), (0.5, -1), (1.5, 0)],
        [(-1.5, -2), (-0.5, 0), (0.5, 2), (1.5, 1)],
        [(-1.5, 0), (-0.5, 1), (0.5, -1), (1.5, 0), (-0.5, -2), (0.5, 2)],
    ])
    def test_wick_pfaffian_identity(self, pts):
        direct, pf = lat.correlator_vs_pfaffian(self.geom, pts)
        assert abs(direct - pf) <= 1e-8 * max(abs(pf), 1e-12)

    def test_two_point_table_is_skew(self):
        pts = [(-0.5, 0), (0.5, 1), (1.5, -1), (-1.5, 0)]
        table = lat.two_point_table(self.geom, pts)
        assert np.max(np.abs(table + table.T)) == 0.0
        pfaffian(table)  # must pass the skew validation


class TestInducedRotation:
    def test_transfer_matrix_preserves_form(self):
        g = lat.StripGeometry(M=1, N=2, beta=0.4)
        assert lat.induced_rotation_check(g, "vm") < 1e-9

    def test_small_beta_vertical_only(self):
        g = lat.StripGeometry(M=1, N=2, beta=1e-3)
        assert lat.induced_rotation_check(g, "v2plus") < 1e-8

    def test_identity_map(self):
        g = lat.StripGeometry(M=1, N=2, beta=0.4)
        assert lat.induced_rotation_check(g, "identity") == 0.0

    def test_m2_at_criticality(self):
        g = lat.StripGeometry(M=2, N=2, beta=lat.CRITICAL_BETA)
        assert lat.induced_rotation_check(g, "vm") < 1e-9


class TestParafermion:
    def setup_method(self):
        self.geom = lat.StripGeometry(M=2, N=3, beta=lat.CRITICAL_BETA)

    def test_round_trip(self):
        z, zp = (-0.5, 0), (0.5, 1)
        f_up, f_down = lat.parafermion_from_correlators(self.geom, z, zp)
        c1, c2 = lat.reconstruct_correlators(f_up, f_down)
        t1 = lat.lattice_fermion_correlator(self.geom, [z, zp])
        t2 = lat.lattice_fermion_correlator(self.geom, [z, zp], kinds=["psi", "psibar"])
        assert abs(c1 - t1) < 1e-12
        assert abs(c2 - t2) < 1e-12

    def test_coincident_rejected(self):
        with pytest.raises(ValueError):
            lat.parafermion_from_correlators(self.geom, (0.5, 0), (0.5, 0))

    def test_up_down_roles(self):
        # swapping the pole structure: F_up couples to the difference,
        # F_down enters with the opposite sign in the psi psi channel
        z, zp = (-1.5, 0), (1.5, 0)
        f_up, f_down = lat.parafermion_from_correlators(self.geom, z, zp)
        c1, _ = lat.reconstruct_correlators(f_up, f_down)
        c1_swapped, _ = lat.reconstruct_correlators(f_down, f_up)
        assert c1_swapped == pytest.approx(-c1, abs=1e-14)

    def test_scaling_toward_continuum_solution(self):
        # F_up should track delta * f_up (strip) up to the frozen constants;
        # the ratio stabilizes as the mesh refines
        from isingcft import cft
        ratios = []
        for m in (2, 3, 4):
            delta = 1.0 / (2 * m)
            geom = lat.StripGeometry(M=m, N=3 * m, beta=lat.CRITICAL_BETA, delta=delta)
            if m % 2 == 0:
                k1, k2 = -m / 2 + 0.5, m / 2 + 0.5
            else:
                k1, k2 = -m / 2, m / 2
            f_up, _ = lat.parafermion_from_correlators(geom, (k1, 0), (k2, 0))
            chart = cft.vertical_strip_to_h(1.0)
            z, zp = k1 * delta + 0j, k2 * delta + 0j
            gz, gp = chart.map(z), chart.map(zp)
            jac = np.sqrt(chart.jet(z)[1]) * np.sqrt(chart.jet(zp)[1])
            f_up_cont = jac * cft.f_up_halfplane(gz, gp)
            ratios.append(f_up / (delta * f_up_cont))
        spread = max(abs(r - ratios[-1]) for r in ratios)
        assert abs(ratios[-1]) > 0.1
        assert spread / abs(ratios[-1]) < 0.2


class TestScalingLimit:
    def test_errors_non_increasing(self):
        rows = lat.scaling_limit_report([2, 3, 4])
        errs = [r.rel_error for r in rows]
        for a, b in zip(errs, errs[1:]):
            assert b <= 1.2 * a
        assert errs[-1] <= 1.2 * errs[0]

    def test_small_height_warns(self):
        with pytest.warns(UserWarning):
            lat.scaling_limit_report([2], aspect=1)
