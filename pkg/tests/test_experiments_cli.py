import math

import numpy as np
import pytest

from betamix import cli
from betamix.errors import DomainError
from betamix.experiments import (INSUFFICIENT, ExperimentConfig, ExperimentReport, chi_square_k,
                                 emit_report, inversions, judge, parse_report_csv, report_csv,
                                 run_experiment)


def power_rows(slope, n=5, noise=None):
    x = 100.0 * 2.0 ** np.arange(n)
    y = 3.0 * x ** slope
    if noise is not None:
        y = y * noise
    return [(float(a), float(b), 1) for a, b in zip(x, y)]


def sample_report():
    rep = ExperimentReport(kind="posterior-rate", sweep="n", columns=["median_l1", "reps", "runtime"],
                           theory=-0.4, tolerance=0.2, trend=True, label="beta22; adaptive")
    rep.rows = [(250.0, 0.08, 5, 1.5), (500.0, 0.06, 5, 2.5), (1000.0, 0.045, 5, 4.0)]
    return rep.finalize()


class TestJudge:
    def test_pass_within_tolerance(self):
        slope, se, verdict, note = judge(power_rows(-0.5), -0.4, 0.2)
        assert slope == pytest.approx(-0.5) and verdict == "pass" and note == ""

    def test_slow_fails(self):
        assert judge(power_rows(-0.1), -0.4, 0.2)[2] == "fail"

    def test_fast_is_annotated(self):
        _, _, verdict, note = judge(power_rows(-1.0), -0.4, 0.2)
        assert verdict == "pass" and "faster than theory" in note

    def test_trend_allows_one_inversion(self):
        one = power_rows(-0.5, noise=np.array([1, 1, 1.5, 1, 1]))
        two = power_rows(-0.5, noise=np.array([1, 1.5, 1, 1.5, 1]))
        assert judge(one, -0.4, 0.2, trend=True)[2] == "pass"
        assert judge(two, -0.4, 0.2, trend=True)[2] == "fail"

    def test_insufficient(self):
        assert judge([], -0.4, 0.2)[2] == INSUFFICIENT
        assert judge(power_rows(-0.5, n=1), -0.4, 0.2)[2] == INSUFFICIENT

    def test_inversions(self):
        assert inversions([3, 2, 2.5, 1]) == 1
        assert inversions([1, 2, 3]) == 2


class TestReports:
    def test_empty_report(self, tmp_path):
        rep = ExperimentReport(kind="approx-continuous", sweep="alpha", columns=["sup_err"],
                               theory=-1.0, tolerance=0.2).finalize()
        assert rep.verdict == INSUFFICIENT
        written = emit_report(rep, tmp_path)
        assert (tmp_path / "report.csv").read_text() == "alpha,sup_err\n"
        assert not (tmp_path / "report.svg").exists()
        assert "verdict: insufficient data" in (tmp_path / "report.txt").read_text()
        assert len(written) == 2
        assert parse_report_csv("alpha,sup_err\n").verdict == INSUFFICIENT

    def test_reemission_is_byte_identical(self, tmp_path):
        rep = sample_report()
        emit_report(rep, tmp_path / "a")
        emit_report(rep, tmp_path / "b")
        for name in ("report.csv", "report.svg", "report.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "report.svg").read_text().startswith("<svg")

    def test_csv_round_trip_and_reverdict(self):
        rep = sample_report()
        back = parse_report_csv(report_csv(rep))
        assert back.kind == rep.kind and back.sweep == "n" and back.trend
        assert back.verdict == rep.verdict
        assert back.slope == pytest.approx(rep.slope, rel=1e-9)
        np.testing.assert_allclose(np.array(back.rows, float), np.array(rep.rows, float))
        assert judge(back.rows, back.theory, back.tolerance, back.trend)[2] == rep.verdict
        assert report_csv(back.finalize()) == report_csv(rep)

    def test_incomplete_flag(self):
        rep = sample_report()
        rep.complete = False
        rep.finalize()
        assert "incomplete" in rep.annotation
        assert parse_report_csv(report_csv(rep)).complete is False

    def test_write_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_report(sample_report(), blocker / "sub")


class TestConfig:
    def test_from_mapping(self):
        cfg = ExperimentConfig.from_mapping({"kind": "posterior-rate", "ns": "100, 200",
                                             "reps": "2", "beta": "2", "a_k": "0.5"})
        assert cfg.ns == [100, 200] and cfg.reps == 2 and cfg.beta == 2.0
        assert cfg.prior["a_k"] == "0.5"

    @pytest.mark.parametrize("kw", [{"kind": "bogus"}, {"alphas": [200.0, 100.0]},
                                    {"reps": 0}, {"mode": "other"}])
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            ExperimentConfig(**kw)

    def test_rate_beta_defaults_to_corpus(self):
        assert ExperimentConfig(density="beta22").rate_beta() == 4.0
        assert ExperimentConfig(density="beta22", beta=2.0).rate_beta() == 2.0


class TestExperiments:
    def test_approx_uniform(self):
        rep = run_experiment(ExperimentConfig(density="uniform", steps=0,
                                              alphas=[100.0, 200.0, 400.0]))
        assert rep.theory == -1.0 and rep.verdict == "pass"
        assert rep.slope == pytest.approx(-1.0, abs=0.25)

    def test_discrete_theory_tracks_boundary_order(self):
        rep = run_experiment(ExperimentConfig(kind="approx-discrete", density="uniform", steps=0,
                                              alphas=[100.0, 200.0, 400.0], t0=2.0))
        assert rep.theory == -1.0 and rep.verdict == "pass"
        flat = run_experiment(ExperimentConfig(kind="approx-discrete", density="uniform", steps=0,
                                               alphas=[100.0, 200.0], t0=1.0))
        assert flat.theory == 0.0

    def test_posterior_small(self):
        cfg = ExperimentConfig(kind="posterior-rate", ns=[50, 100], reps=2, iters=60, burnin=20,
                               thin=2, beta=2.0, seed=3)
        rep = run_experiment(cfg)
        assert [r[0] for r in rep.rows] == [50.0, 100.0]
        assert all(r[2] == 2 for r in rep.rows)
        again = run_experiment(cfg)
        assert [r[1] for r in again.rows] == [r[1] for r in rep.rows]

    def test_posterior_budget_marks_incomplete(self):
        cfg = ExperimentConfig(kind="posterior-rate", ns=[50, 100], reps=1, iters=40, burnin=10,
                               beta=2.0)
        rep = run_experiment(cfg, budget_seconds=0.0)
        assert not rep.complete and rep.verdict == INSUFFICIENT

    def test_posterior_fixed_and_dirichlet_modes(self):
        for mode in ("fixed-alpha", "dirichlet"):
            cfg = ExperimentConfig(kind="posterior-rate", ns=[40, 80], reps=1, iters=30, burnin=10,
                                   beta=2.0, mode=mode)
            rep = run_experiment(cfg)
            assert len(rep.rows) == 2 and all(0 < r[1] < 2 for r in rep.rows)

    def test_prior_sanity_small(self):
        rep = run_experiment(ExperimentConfig(kind="prior-sanity", draws=3000, sweeps=3000, seed=1))
        assert [r[0] for r in rep.rows] == ["ks_eps", "ks_sqrt_alpha", "chi2_k_zero_data"]
        assert rep.verdict in ("pass", "fail")

    def test_chi_square_exact_sample(self):
        p = np.array([0.5, 0.3, 0.2])
        ks = np.repeat([1, 2, 3], [500, 300, 200])
        stat, pval = chi_square_k(ks, np.log(p))
        assert stat == pytest.approx(0.0, abs=1e-12) and pval == pytest.approx(1.0)


class TestCLI:
    def write(self, tmp_path, name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    def test_approx_pass(self, tmp_path, capsys):
        cfg = self.write(tmp_path, "a.cfg", "density = uniform\nsteps = 0\nalphas = 100,200,400\n")
        out = tmp_path / "out"
        assert cli.main(["approx", "--config", cfg, "--out", str(out)]) == cli.EXIT_PASS
        assert (out / "report.csv").exists() and (out / "report.svg").exists()
        assert "verdict pass" in capsys.readouterr().out

    def test_discretize_fail_exit_code(self, tmp_path):
        cfg = self.write(tmp_path, "d.cfg", "density = uniform\nsteps = 0\nalphas = 100,200\n"
                                            "t0 = 2\ntolerance = 0.001\nbeta = 0.5\n")
        # theory -0.5 with t0 = 2 while the measured slope is about -1: passes as faster
        out = tmp_path / "d"
        assert cli.main(["discretize", "--config", cfg, "--out", str(out)]) == cli.EXIT_PASS
        assert (out / "mixture.txt").exists()
        cfg = self.write(tmp_path, "e.cfg", "density = uniform\nsteps = 0\nalphas = 100,200\n"
                                            "t0 = 2\ntolerance = 0.001\nbeta = 8\n")
        # theory -min(2, 1) = -1 with tolerance 0.001 against about -0.98
        assert cli.main(["discretize", "--config", cfg, "--out", str(out)]) == cli.EXIT_FAIL

    def test_fit(self, tmp_path, capsys):
        x = np.random.default_rng(0).beta(2, 2, 100)
        data = self.write(tmp_path, "x.csv", "# observations\n" + "\n".join(f"{v:.10f}" for v in x)
                          + "\n\n")
        cfg = self.write(tmp_path, "f.cfg", "iters = 200\nburnin = 50\n")
        out = tmp_path / "fit"
        code = cli.main(["fit", "--config", cfg, "--data", data, "--out", str(out), "--seed", "4"])
        assert code == cli.EXIT_PASS
        for name in ("chain.txt", "posterior_mean.csv", "diagnostics.csv"):
            assert (out / name).exists()
        assert "posterior mean mass 1.0000" in capsys.readouterr().out

    def test_fit_deterministic(self, tmp_path):
        data = self.write(tmp_path, "x.csv", "0.2\n0.4\n0.45\n0.7\n")
        cfg = self.write(tmp_path, "f.cfg", "iters = 100\n")
        for d in ("a", "b"):
            cli.main(["fit", "--config", cfg, "--data", data, "--out", str(tmp_path / d)])
        assert (tmp_path / "a" / "chain.txt").read_bytes() == (tmp_path / "b" / "chain.txt").read_bytes()

    def test_errors_exit_one(self, tmp_path, capsys):
        assert cli.main(["fit", "--data", str(tmp_path / "missing.csv"),
                         "--out", str(tmp_path)]) == cli.EXIT_ERROR
        assert cli.main(["fit", "--out", str(tmp_path)]) == cli.EXIT_ERROR
        bad = self.write(tmp_path, "bad.csv", "0.5\nhello\n")
        assert cli.main(["fit", "--data", bad, "--out", str(tmp_path)]) == cli.EXIT_ERROR
        edge = self.write(tmp_path, "edge.csv", "0.0\n0.5\n")
        assert cli.main(["fit", "--data", edge, "--out", str(tmp_path)]) == cli.EXIT_ERROR
        assert cli.main(["approx", "--seed", "-1"]) == cli.EXIT_ERROR
        cfg = self.write(tmp_path, "k.cfg", "kind = prior-sanity\n")
        assert cli.main(["rates", "--config", cfg]) == cli.EXIT_ERROR
        err = capsys.readouterr().err
        assert "missing.csv" in err and "not a number" in err

    def test_read_data(self, tmp_path):
        path = self.write(tmp_path, "x.csv", "0.1\n  # note\n0.2 # inline\n\n")
        np.testing.assert_array_equal(cli.read_data(path), [0.1, 0.2])

    def test_parser_requires_command(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([])
