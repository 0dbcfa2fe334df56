import numpy as np
import pytest

from wgfem.analysis import NI_UNSTABLE, ConvergenceRecord
from wgfem.harness import (
    ComparisonReport,
    ConfigError,
    StudySpec,
    emit_order_grid,
    emit_table,
    export_solution_surface,
    find_reference_table,
    golden_compare,
    list_reference_tables,
    load_reference_table,
    parse_config_text,
    run_combination,
    run_study,
    spec_from_config,
    write_surface,
)
from wgfem.mesh import build_uniform_square_mesh
from wgfem.solvers import get_problem
from wgfem.space import WGConfig, project_field


class TestStudySpec:
    def test_tau_gamma_exclusive(self):
        with pytest.raises(ConfigError):
            StudySpec(tau=1e-3, gamma=1.0)
        with pytest.raises(ConfigError):
            StudySpec()

    def test_ladder_must_double(self):
        with pytest.raises(ConfigError):
            StudySpec(levels=(4, 12), tau=1e-2)

    def test_coupled_step_scaling(self):
        # halving h multiplies the step count by 2^(gamma+1)
        spec = StudySpec(levels=(4, 8, 16), gamma=1.0)
        steps = [spec.grid_for(n).steps for n in spec.levels]
        assert steps == [16, 64, 256]
        spec2 = StudySpec(levels=(4, 8), gamma=2.0)
        assert spec2.grid_for(8).steps == 8**3

    def test_fixed_tau(self):
        spec = StudySpec(levels=(4,), tau=1e-3)
        assert spec.grid_for(4).steps == 1000


class TestConfigParsing:
    def test_parse_text(self):
        cfg = parse_config_text("""
        # comment
        k = 2
        j = 0..2
        l = 1,2
        stabilizer = projected
        n_levels = 4,8
        tau = 1e-3
        """)
        spec, extras = spec_from_config(cfg)
        assert spec.ks == (2,)
        assert spec.js == (0, 1, 2)
        assert spec.ls == (1, 2)
        assert spec.levels == (4, 8)
        assert spec.tau == 1e-3
        assert extras == {}

    def test_bad_line(self):
        with pytest.raises(ConfigError):
            parse_config_text("k 2")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            spec_from_config({"k": "2", "bogus": "1", "tau": "1e-3"})

    def test_extras_passed_through(self):
        spec, extras = spec_from_config(
            {"k": "1", "j": "1", "l": "0", "tau": "0.05", "format": "both", "out": "x"}
        )
        assert extras == {"format": "both", "out": "x"}


@pytest.fixture(scope="module")
def small_result():
    spec = StudySpec(ks=(1,), js=(1,), ls=(0,), levels=(2, 4), tau=0.05)
    return spec, run_combination(spec, 1, 1, 0)


class TestRunCombination:
    def test_records_and_orders(self, small_result):
        _, res = small_result
        assert res.status == "converged"
        assert len(res.records) == 2
        assert res.records[0].triple_bar_order is None
        assert res.records[1].triple_bar_order == pytest.approx(1.0, abs=0.4)
        assert res.records[1].l2_order == pytest.approx(2.0, abs=0.4)

    def test_ni_combination_is_captured(self):
        spec = StudySpec(ks=(2,), js=(0,), ls=(0,), levels=(2, 4), tau=0.05)
        res = run_combination(spec, 2, 0, 0)
        assert res.status == NI_UNSTABLE
        assert all(r.triple_bar_error is None for r in res.records)


class TestEmit:
    def test_empty_csv_is_header_only(self):
        assert emit_table([], "csv").strip() == (
            "h_label,tau,triple_bar_error,triple_bar_order,l2_error,l2_order,status"
        )

    def test_csv_layout(self, small_result):
        _, res = small_result
        text = emit_table(res.records, "csv")
        lines = text.strip().split("\n")
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "1/2"
        assert first[3] == ""  # first row has no order
        assert first[6] == "converged"

    def test_markdown_ni_cells(self):
        recs = [ConvergenceRecord(n=4, tau=0.1, status=NI_UNSTABLE)]
        md = emit_table(recs, "markdown")
        assert "| 1/4 | NI | NI | NI | NI |" in md

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            emit_table([], "html")

    def test_order_grid(self, small_result):
        _, res = small_result
        grid = emit_order_grid([res])
        assert "k = 1" in grid
        assert "j=1" in grid


class TestDeterminism:
    def test_rerun_is_byte_identical(self, monkeypatch):
        monkeypatch.setenv("WG_THREADS", "2")
        spec = StudySpec(ks=(1,), js=(1,), ls=(0, 1), levels=(2, 4), tau=0.05)
        out1 = [emit_table(r.records, "csv") for r in run_study(spec)]
        out2 = [emit_table(r.records, "csv") for r in run_study(spec)]
        assert out1 == out2


class TestReferenceTables:
    def test_all_tables_load_and_are_self_consistent(self):
        ids = list_reference_tables()
        assert len(ids) == 29
        assert ids[0] == 15 and ids[-1] == 43
        for tid in ids:
            ref = load_reference_table(tid)
            assert len(ref.records) == 4
            # orders of non rate-only tables agree with their own error ratios
            if not ref.rate_only:
                for prev, cur in zip(ref.records, ref.records[1:]):
                    if cur.triple_bar_order is not None and cur.triple_bar_order > 0:
                        implied = np.log2(prev.triple_bar_error / cur.triple_bar_error)
                        assert abs(implied - cur.triple_bar_order) < 0.02

    def test_table16_values(self):
        ref = load_reference_table(16)
        assert (ref.k, ref.j, ref.l, ref.stabilizer) == (2, 1, 1, "projected")
        assert ref.tau == 1e-4
        assert ref.records[0].triple_bar_error == pytest.approx(7.169166e-02)
        assert ref.records[1].l2_order == pytest.approx(3.002190)

    def test_find_by_scheme(self):
        ref = find_reference_table(2, 1, 1, "plain")
        assert ref is not None and ref.table_id == 31 and ref.rate_only

    def test_unknown_id(self):
        with pytest.raises(KeyError):
            load_reference_table(99)


class TestGoldenCompare:
    def test_identical_passes(self):
        ref = load_reference_table(16)
        report = golden_compare(list(ref.records), ref)
        assert report.passed and report.rates_pass
        assert report.compared_rows == 4

    def test_order_miss_fails_with_named_cell(self):
        ref = load_reference_table(16)
        recs = [r for r in ref.records]
        from dataclasses import replace

        recs[1] = replace(recs[1], triple_bar_order=1.7)
        report = golden_compare(recs, ref, order_tol=0.2)
        assert not report.rates_pass
        assert any("h=1/8" in f and "triple_bar_order" in f for f in report.failures)

    def test_magnitude_miss_is_soft(self):
        ref = load_reference_table(16)
        from dataclasses import replace

        recs = [replace(r, triple_bar_error=r.triple_bar_error * 1.5) for r in ref.records]
        report = golden_compare(recs, ref)
        assert report.rates_pass and not report.passed
        assert report.soft_failures

    def test_rate_only_skips_magnitudes(self):
        ref = load_reference_table(31)
        from dataclasses import replace

        recs = [replace(r, triple_bar_error=r.triple_bar_error * 100,
                        l2_error=r.l2_error * 100) for r in ref.records]
        report = golden_compare(recs, ref)
        assert report.passed

    def test_shape_mismatch(self):
        ref = load_reference_table(16)
        with pytest.raises(ValueError):
            golden_compare([ConvergenceRecord(n=3, tau=1.0)], ref)


class TestSurfaceExport:
    def test_zero_field(self):
        mesh = build_uniform_square_mesh(4)
        config = WGConfig(2, 1, 1)
        from wgfem.space import WeakField

        samples = export_solution_surface(WeakField.zeros(mesh, config), mesh, 9)
        assert samples.shape == (81, 3)
        assert np.abs(samples[:, 2]).max() == 0.0

    def test_projected_exact_surface(self):
        # peak of exp(-1) sin(pi x) sin(pi y) at the center; refinement tightens
        fn = lambda x, y: np.exp(-1.0) * np.sin(np.pi * np.asarray(x)) * np.sin(np.pi * np.asarray(y))
        maxerr = []
        for n in (4, 8):
            mesh = build_uniform_square_mesh(n)
            config = WGConfig(2, 1, 1)
            field = project_field(mesh, config, fn)
            samples = export_solution_surface(field, mesh, 33)
            exact = fn(samples[:, 0], samples[:, 1])
            maxerr.append(np.abs(samples[:, 2] - exact).max())
            center = samples[(samples[:, 0] == 0.5) & (samples[:, 1] == 0.5)]
            assert center[0, 2] == pytest.approx(np.exp(-1.0), abs=0.01)
        assert maxerr[1] < maxerr[0] / 4  # at least O(h^2) pointwise

    def test_rejects_tiny_grid(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(1, 1, 0)
        from wgfem.space import WeakField

        with pytest.raises(ValueError):
            export_solution_surface(WeakField.zeros(mesh, config), mesh, 1)

    def test_write_surface(self, tmp_path):
        samples = np.array([[0.0, 0.0, 1.0], [1.0, 0.5, -2.0]])
        path = tmp_path / "s.dat"
        write_surface(samples, path)
        rows = [line.split() for line in path.read_text().strip().split("\n")]
        assert len(rows) == 2 and float(rows[1][2]) == -2.0
