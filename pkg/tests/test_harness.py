import math

import numpy as np
import pytest

from sparsesense.adaptive import RzaNlmfConfig
from sparsesense.baselines import BpdnConfig
from sparsesense.harness import (
    CSV_COLUMNS,
    SUMMARY_ID,
    ExperimentSpec,
    GridPoint,
    ResultRow,
    ResultTable,
    emit_csv,
    read_csv,
    run_experiment,
    run_trial,
    steady_state_mse,
)

SMALL = dict(n_dim=10, m_dim=5, sparsity_levels=(2,), snr_grid_db=(10.0,),
             rza_config=RzaNlmfConfig(n_max=30))


class TestSpec:
    def test_defaults_match_reference_setup(self):
        spec = ExperimentSpec()
        assert (spec.n_dim, spec.m_dim) == (40, 20)
        assert spec.sparsity_levels == (2, 6, 10)
        assert spec.rza_config.mu_iss == 1.5
        assert spec.rza_config.lambda_ass == 5e-8
        assert spec.epsilon_grid == (2000.0,)
        assert spec.n_max() == 800

    @pytest.mark.parametrize("kwargs", [dict(trials=0), dict(m_dim=50), dict(sparsity_levels=()),
                                        dict(solvers=("lasso",)), dict(epsilon_grid=(0.0,)),
                                        dict(snr_convention="db"), dict(master_seed=-1),
                                        dict(solvers=("oracle",), sparsity_levels=(6,))])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentSpec(**kwargs)

    def test_aliases(self):
        assert ExperimentSpec(solvers=("ass", "omp", "bpdn")).solvers == (
            "ass_rza_nlmf", "nss_omp", "nss_bpdn")

    def test_rho_convention_propagates(self):
        spec = ExperimentSpec(rho_convention="inverse")
        assert spec.ass_config(2000.0).rho == pytest.approx(1.5 * 5e-8 / 2000)


class TestRunTrial:
    def test_bit_identical(self):
        spec = ExperimentSpec(**SMALL, solvers=("ass", "omp", "bpdn"))
        a = run_trial(spec, GridPoint(2, 10.0, 2000.0), 3)
        b = run_trial(spec, GridPoint(2, 10.0, 2000.0), 3)
        for s in spec.solvers:
            assert np.array_equal(a.results[s].squared_errors, b.results[s].squared_errors)
            assert np.array_equal(a.results[s].estimate, b.results[s].estimate)

    def test_oracle_dominates_omp(self):
        spec = ExperimentSpec(**SMALL, solvers=("omp", "oracle"))
        for t in range(40):
            out = run_trial(spec, GridPoint(2, 10.0, 2000.0), t)
            assert (out.results["oracle_exhaustive"].residual_norm
                    <= out.results["nss_omp"].residual_norm * (1 + 1e-12))

    def test_noiseless_omp_exact_when_identifiable(self):
        spec = ExperimentSpec(n_dim=40, m_dim=20, sparsity_levels=(2,), snr_grid_db=(10.0,),
                              solvers=("omp", "oracle"), no_noise=True)
        for t in range(30):
            out = run_trial(spec, GridPoint(2, 10.0, 2000.0), t)
            oracle_ok = np.array_equal(np.flatnonzero(out.results["oracle_exhaustive"].estimate),
                                       np.flatnonzero(out.truth))
            if oracle_ok:
                assert out.results["nss_omp"].squared_errors[0] < 1e-10

    def test_solvers_share_instance(self):
        spec = ExperimentSpec(**SMALL, solvers=("ass", "omp"))
        a = run_trial(spec, GridPoint(2, 10.0, 2000.0), 1)
        b = run_trial(spec, GridPoint(2, 10.0, 20.0), 1)
        assert np.array_equal(a.truth, b.truth)
        assert np.array_equal(a.results["nss_omp"].estimate, b.results["nss_omp"].estimate)

    def test_bpdn_lambda_universal_threshold(self):
        spec = ExperimentSpec(**SMALL, solvers=("bpdn",))
        out = run_trial(spec, GridPoint(2, 10.0, 2000.0), 0)
        assert out.results["nss_bpdn"].bpdn_lambda == pytest.approx(
            math.sqrt(0.1) * math.sqrt(2 * math.log(10)))
        assert np.all(np.diff(out.results["nss_bpdn"].objective_trace) <= 0)

    def test_divergence_is_flagged(self):
        spec = ExperimentSpec(**{**SMALL, "rza_config": RzaNlmfConfig(mu_iss=1e9, n_max=200)},
                              solvers=("ass",))
        table = run_experiment(replace_trials(spec, 3))
        assert table.divergences["ass_rza_nlmf"] == 3
        summary = table.select(experiment_id=SUMMARY_ID)
        assert summary[0].avg_mse == 3.0


def replace_trials(spec, trials):
    from dataclasses import replace

    return replace(spec, trials=trials)


class TestRunExperiment:
    def test_single_point_omp(self):
        spec = ExperimentSpec(**SMALL, solvers=("omp",), trials=1)
        table = run_experiment(spec)
        data = [r for r in table.rows if r.experiment_id != SUMMARY_ID]
        assert len(data) == 1 and data[0].iteration == 0 and data[0].trials == 1

    def test_average_matches_sequential_recomputation(self):
        spec = ExperimentSpec(**SMALL, solvers=("ass", "omp"), trials=7)
        table = run_experiment(spec)
        point = spec.grid()[0]
        runs = [run_trial(spec, point, t) for t in range(7)]
        ass = np.mean([r.results["ass_rza_nlmf"].squared_errors for r in runs], axis=0)
        np.testing.assert_allclose(table.curve("ass_rza_nlmf", 2, 10.0, 2000.0), ass,
                                   rtol=0, atol=1e-12)
        omp_avg = np.mean([r.results["nss_omp"].squared_errors[0] for r in runs])
        assert table.curve("nss_omp", 2, 10.0, 2000.0)[0] == pytest.approx(omp_avg, abs=1e-12)

    def test_rows_sorted_and_crlb_attached(self):
        spec = ExperimentSpec(**{**SMALL, "snr_grid_db": (0.0, 10.0)},
                              epsilon_grid=(20.0, 2000.0), solvers=("ass", "omp"), trials=2)
        table = run_experiment(spec)
        keys = [(r.experiment_id, r.solver_id, r.iteration) for r in table.rows]
        assert keys == sorted(keys)
        row = table.select(solver_id="nss_omp", snr_db=10.0, epsilon=20.0)[0]
        assert row.crlb_nss == pytest.approx(2 * 0.1 / 10)
        assert all(r.avg_mse >= 0 for r in table.rows)

    def test_worker_count_does_not_change_table(self):
        spec = ExperimentSpec(**SMALL, solvers=("ass", "omp", "bpdn"), trials=6)
        assert run_experiment(spec, workers=1).rows == run_experiment(spec, workers=3).rows

    def test_steady_state(self):
        assert steady_state_mse([5.0, 4.0, 3.0, 1.0], 2) == 2.0
        assert steady_state_mse([0.25], 20) == 0.25


class TestCsv:
    def _rows(self, count, rng):
        return [ResultRow(f"g{i:04d}", "ass_rza_nlmf", 2, float(rng.normal()), 2000.0, i,
                          float(rng.exponential()), 200, float(rng.random()), float(rng.normal()))
                for i in range(count)]

    def test_empty(self, tmp_path):
        path = tmp_path / "t.csv"
        emit_csv(ResultTable(), path)
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_single_row(self, tmp_path, rng):
        path = tmp_path / "t.csv"
        table = ResultTable(self._rows(1, rng))
        emit_csv(table, path)
        text = path.read_text()
        assert text.endswith("\n") and len(text.splitlines()) == 2
        assert read_csv(path).rows == table.rows

    def test_round_trip_bit_exact(self, tmp_path, rng):
        path = tmp_path / "t.csv"
        table = ResultTable(self._rows(10, rng))
        emit_csv(table, path)
        assert read_csv(path).rows == table.rows

    def test_seventeen_digits(self, tmp_path):
        row = ResultRow("g0000", "nss_omp", 2, 10.0, 2000.0, 0, 0.1, 1, 0.005, math.nan)
        path = tmp_path / "t.csv"
        emit_csv(ResultTable([row]), path)
        assert "0.10000000000000001" in path.read_text()

    def test_io_error(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            emit_csv(ResultTable(), tmp_path / "missing" / "t.csv")
