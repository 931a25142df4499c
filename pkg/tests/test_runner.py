import numpy as np
import pytest

from pairjump import runner, stats
from pairjump.runner import (ConfigError, RunAbortedError, RunConfig,
                             config_from_mapping, parse_config_text,
                             read_density_csv, run_compare, run_pjm_table,
                             run_reference, run_simulate, time_grid,
                             write_density_csv)

JC_SMALL = dict(model="jc", gamma0_over_lambda=5.0, n_modes=32,
                window_factor=20.0, t_max=1.0, n_grid=5,
                n_trajectories=400, seed=11, chunk_size=128)


class TestConfig:
    def test_parse_text(self):
        text = """
        # comment
        model = jc
        n_modes = 128   # trailing comment
        t_max = 2.5
        """
        mapping = parse_config_text(text)
        assert mapping == {"model": "jc", "n_modes": "128", "t_max": "2.5"}

    def test_bad_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("not a key value pair")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_mapping({"bogus": "1"})

    def test_type_errors_name_the_key(self):
        with pytest.raises(ConfigError, match="n_modes"):
            config_from_mapping({"model": "jc", "n_modes": "many"})

    def test_validation_messages(self):
        with pytest.raises(ConfigError, match="model"):
            RunConfig(model="other").validate()
        with pytest.raises(ConfigError, match="stepper"):
            RunConfig(stepper="magic").validate()
        with pytest.raises(ConfigError, match="t_max"):
            RunConfig(t_max=-1.0).validate()

    def test_steps_resolution_bound(self):
        cfg = RunConfig(**JC_SMALL, steps_per_grid=1)
        model = runner.build_model(cfg)
        with pytest.raises(ConfigError, match="steps"):
            runner.resolve_steps_per_interval(cfg, model)

    def test_grid_includes_endpoints(self):
        cfg = RunConfig(**JC_SMALL)
        grid = time_grid(cfg)
        assert grid[0] == 0.0 and grid[-1] == cfg.t_max
        assert len(grid) == cfg.n_grid


class TestSimulateCsv:
    def test_rerun_is_bitwise_identical(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        run_simulate(RunConfig(**JC_SMALL, output=str(out1)))
        run_simulate(RunConfig(**JC_SMALL, output=str(out2)))
        assert out1.read_bytes() == out2.read_bytes()

    def test_workers_do_not_change_bytes(self, tmp_path):
        outs = []
        for w in (1, 2):
            path = tmp_path / f"w{w}.csv"
            run_simulate(RunConfig(**JC_SMALL, workers=w, output=str(path)))
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_jc_header_names(self, tmp_path):
        path = tmp_path / "jc.csv"
        run_simulate(RunConfig(**JC_SMALL, output=str(path)))
        header = path.read_text().splitlines()[0]
        assert header.startswith("t,re_ee,im_ee,se_re_ee,se_im_ee,re_eg")
        assert header.endswith("n,aborted")

    def test_spin_initial_coherence_exact(self, tmp_path):
        path = tmp_path / "spin.csv"
        cfg = RunConfig(model="spin_bath", n_spins=4, a_over_omega0=0.5,
                        t_max=1.0, n_grid=4, n_trajectories=300, seed=2,
                        chunk_size=100, output=str(path))
        run_simulate(cfg)
        parsed = read_density_csv(str(path))
        assert parsed.column("+-", "re")[0] == 1.0
        assert parsed.column("+-", "im")[0] == 0.0

    def test_round_trip_preserves_12_digits(self, tmp_path):
        cfg = RunConfig(**JC_SMALL)
        res = run_simulate(cfg)
        path = tmp_path / "rt.csv"
        write_density_csv(str(path), res.estimate)
        parsed = read_density_csv(str(path))
        k = parsed.entry_labels.index("ee")
        np.testing.assert_allclose(parsed.re[:, k],
                                   res.estimate.mean[:, 0, 0].real,
                                   rtol=1e-12, atol=1e-300)
        assert parsed.n == res.estimate.n

    def test_aborted_fraction_fails_run(self):
        cfg = RunConfig(**JC_SMALL, log_weight_cap=0.05)
        with pytest.raises(RunAbortedError):
            run_simulate(cfg)

    def test_thinning_stepper_runs(self):
        cfg = RunConfig(model="jc", gamma0_over_lambda=5.0, n_modes=32,
                        t_max=0.8, n_grid=3, n_trajectories=40, seed=13,
                        stepper="thinning", chunk_size=20)
        res = run_simulate(cfg)
        assert res.estimate.n == 40
        assert res.estimate.mean[0, 0, 0] == 1.0


class TestReference:
    def test_born_markov_value(self, tmp_path):
        path = tmp_path / "bm.csv"
        cfg = RunConfig(model="jc", gamma0_over_lambda=5.0, t_max=0.4,
                        n_grid=3, output=str(path))
        run_reference(cfg, "born_markov")
        parsed = read_density_csv(str(path))
        assert parsed.column("ee")[1] == pytest.approx(np.exp(-1.0),
                                                       rel=1e-12)
        assert np.all(parsed.se_re == 0.0)

    def test_jc_exact_first_zero_on_grid(self, tmp_path):
        path = tmp_path / "ex.csv"
        cfg = RunConfig(model="jc", gamma0_over_lambda=5.0, t_max=5.0,
                        n_grid=401, output=str(path))
        run_reference(cfg, "jc_exact")
        parsed = read_density_csv(str(path))
        p = parsed.column("ee")
        i0 = int(np.argmin(p[:200]))
        assert parsed.grid[i0] == pytest.approx(1.2617, abs=0.02)

    def test_spin_block_discard_bound(self, tmp_path):
        path = tmp_path / "sb.csv"
        cfg = RunConfig(model="spin_bath", n_spins=40, a_over_omega0=0.5,
                        t_max=1.0, n_grid=3, epsilon_cut=1e-3,
                        output=str(path))
        res = run_reference(cfg, "spin_block")
        assert res.discarded_weight is not None
        assert 0.0 <= res.discarded_weight <= 1e-3

    def test_model_kind_mismatch(self):
        cfg = RunConfig(model="jc", t_max=1.0, n_grid=3)
        with pytest.raises(ConfigError):
            run_reference(cfg, "spin_block")
        with pytest.raises(ConfigError):
            run_reference(RunConfig(model="spin_bath", t_max=1.0, n_grid=3),
                          "jc_exact")


class TestCompare:
    def _write_pair(self, tmp_path, shift=0.0):
        # dyadic values survive the CSV round trip bit-exactly
        grid = np.linspace(0.0, 1.0, 4)
        mean = np.zeros((4, 2, 2), dtype=complex)
        mean[:, 0, 0] = [1.0, 0.75, 0.5, 0.25]
        se = np.full((4, 2, 2), 0.25)
        zeros = np.zeros(4)
        est_sim = stats.DensityEstimate(
            grid=grid, labels=("e", "g"), mean=mean, se_re=se,
            se_im=se.copy(), n=100, aborted=0, trace_mean=np.ones(4),
            trace_se_re=zeros, trace_se_im=zeros,
            herm_mean=np.zeros_like(mean), herm_se_re=se, herm_se_im=se)
        ref_mean = mean.copy()
        ref_mean[2, 0, 0] += shift
        est_ref = stats.DensityEstimate(
            grid=grid, labels=("e", "g"), mean=ref_mean,
            se_re=np.zeros_like(se), se_im=np.zeros_like(se), n=0, aborted=0,
            trace_mean=np.ones(4), trace_se_re=zeros, trace_se_im=zeros,
            herm_mean=np.zeros_like(mean), herm_se_re=np.zeros_like(se),
            herm_se_im=np.zeros_like(se))
        sim_path = tmp_path / "sim.csv"
        ref_path = tmp_path / "ref.csv"
        write_density_csv(str(sim_path), est_sim)
        write_density_csv(str(ref_path), est_ref)
        return str(sim_path), str(ref_path)

    def test_identical_files_all_zero(self, tmp_path):
        sim, ref = self._write_pair(tmp_path)
        report = run_compare(sim, ref)
        assert report.max_abs_z == 0.0
        assert report.frac_within(4.0) == 1.0
        assert report.passes()

    def test_four_se_shift_gives_z_four(self, tmp_path):
        sim, ref = self._write_pair(tmp_path, shift=4 * 0.25)
        report = run_compare(sim, ref)
        assert report.max_abs_z == 4.0
        assert report.passes(max_z=4.0)
        assert not report.passes(max_z=3.9)

    def test_grid_mismatch(self, tmp_path):
        sim, _ = self._write_pair(tmp_path)
        other = tmp_path / "other.csv"
        cfg = RunConfig(model="jc", gamma0_over_lambda=5.0, t_max=0.4,
                        n_grid=3, output=str(other))
        run_reference(cfg, "born_markov")
        with pytest.raises(ValueError, match="grids differ"):
            run_compare(sim, str(other))


class TestPjmTable:
    def test_single_spin(self):
        rows = run_pjm_table(1)
        assert len(rows) == 1
        j, p, w, cum = rows[0]
        assert (j, p, w, cum) == (0.5, 0.5, 1.0, 1.0)

    def test_two_spins_sum_to_one(self):
        rows = run_pjm_table(2)
        assert sum(w for _, _, w, _ in rows) == pytest.approx(1.0, abs=1e-15)

    def test_large_bath_cumulative_complete(self, tmp_path):
        path = tmp_path / "pjm.csv"
        rows = run_pjm_table(1000, str(path))
        assert rows[-1][3] >= 1.0 - 1e-12
        lines = path.read_text().splitlines()
        assert lines[0] == "j,p_per_pair,ladder_weight,cumulative"
        assert len(lines) == len(rows) + 1
