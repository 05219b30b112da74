"""End-to-end acceptance criteria at their stated tolerances.

Each test records a one-line PASS/FAIL summary that is printed at the end
of the pytest run.
"""

import math

import numpy as np
import pytest

from conftest import record_acceptance
from risframe.arrays import AnglePair, angular_distance
from risframe.beamsearch import hierarchical_search
from risframe.channel import complex_normal
from risframe.estimation import ReweightConfig, ReweightState, least_squares, reweight_step, surrogate, \
    surrogate_gradient
from risframe.harness import experiments as ex
from risframe.harness import io
from risframe.harness.cli import main
from risframe.harness.config import ScenarioConfig
from risframe.ris_control import design_theta, steer_configuration
from risframe.tracking import half_power_beamwidth

SNRS = (0.0, 5.0, 10.0, 15.0)


def check(number: int, passed: bool, detail: str) -> None:
    record_acceptance(number, bool(passed), detail)
    assert passed, detail


@pytest.fixture(scope="module")
def sweep():
    cfg = ScenarioConfig(trials=100, snr_db=list(SNRS))
    _, points = ex.run_nmse_sweep(cfg)
    return {(p.method, p.m_ris, p.snr_db): p for p in points}


class TestNmseSweep:
    def test_criterion_1_nmse_at_15db(self, sweep):
        p = sweep[("proposed", 256, 15.0)]
        assert p.trials >= 100 and p.u_p == 128
        check(1, p.mean_nmse <= 0.02, f"mean NMSE {p.mean_nmse:.4g} <= 0.02 over {p.trials} trials")

    def test_criterion_2_ordering(self, sweep):
        rows = [(s, sweep[("proposed", 256, s)].mean_nmse, sweep[("proposed", 64, s)].mean_nmse,
                 sweep[("proposed", 16, s)].mean_nmse) for s in SNRS]
        ok = all(a < b < c for _, a, b, c in rows)
        detail = "; ".join(f"{s:g} dB: {a:.3g} < {b:.3g} < {c:.3g}" for s, a, b, c in rows)
        check(2, ok, detail)

    def test_criterion_3_baseline_gap(self, sweep):
        ratios = {(m, s): sweep[("baseline", m, s)].mean_nmse / sweep[("proposed", m, s)].mean_nmse
                  for m in (16, 64, 256) for s in SNRS}
        worst = min(ratios, key=ratios.get)
        check(3, ratios[worst] >= 5.0, f"smallest baseline/proposed ratio {ratios[worst]:.3g} "
                                       f"(M_RIS={worst[0]}, {worst[1]:g} dB) >= 5")


class TestBeamPattern:
    def test_criterion_4_distortion_and_compensation(self):
        cfg = ScenarioConfig(pattern_trials=50)
        res = ex.run_beam_pattern(cfg)
        de, da = res.cell
        bw = res.beamwidth
        desired = res.desired

        def in_cell(peak, ref):
            d_az = (peak[1] - ref.azimuth + math.pi) % (2 * math.pi) - math.pi
            return abs(peak[0] - ref.elevation) <= de + 1e-9 and abs(d_az) <= da + 1e-9

        ideal_ok = all(in_cell(t.peaks["ideal"], desired) for t in res.trials)
        shifts = [angular_distance(AnglePair(*t.peaks["sparse"]), desired) for t in res.trials]
        sparse_ok = min(shifts) > bw
        comp_ok = all(in_cell(t.peaks["compensated"], AnglePair(*t.peaks["ideal"])) for t in res.trials)
        gaps = [abs(10 * math.log10(t.peak_power["compensated"] / t.peak_power["ideal"])) for t in res.trials]
        ok = ideal_ok and sparse_ok and comp_ok and max(gaps) <= 0.5 and len(res.trials) == 50
        check(4, ok, f"ideal in cell {ideal_ok}; min sparse shift {math.degrees(min(shifts)):.2f} deg > "
                     f"{math.degrees(bw):.2f} deg; compensated in cell {comp_ok}, max gap {max(gaps):.3g} dB")


class TestCompensationIdentity:
    def test_criterion_5_identity(self):
        rng = np.random.default_rng(5)
        square = ex.build_system(ScenarioConfig(m_ris=16, m_bs=16), 16)
        wide = ex.build_system(ScenarioConfig(m_ris=16, m_bs=64), 16)
        worst = 0.0
        for i in range(100):
            system = square if i % 2 == 0 else wide
            g_opt = system.g_opt
            m_ris, m_bs = system.ris.size, system.bs.size
            if m_bs == m_ris:
                g_hat = complex_normal(rng, (m_ris, m_bs))
            else:
                # wide estimate whose row space holds the (rank-one) deployment channel
                row = np.linalg.svd(g_opt.matrix)[2][:1]
                g_hat = complex_normal(rng, (m_ris, m_ris)) @ np.vstack([row, complex_normal(rng, (m_ris - 1, m_bs))])
            assert np.linalg.matrix_rank(g_hat) == m_ris
            des = AnglePair(rng.uniform(0, 1.4), rng.uniform(0, 2 * np.pi))
            theta = design_theta(g_hat, g_opt, des)
            ref = steer_configuration(system.ris, g_opt.paths[0].arrival, des).apply(g_opt.matrix)
            worst = max(worst, float(np.linalg.norm(theta.theta @ g_hat - ref) / np.linalg.norm(ref)))
        check(5, worst <= 1e-8, f"max relative residual {worst:.3g} <= 1e-8 over 100 full-row-rank estimates")


class TestHierarchicalSearch:
    def test_criterion_6_within_3db(self):
        cfg = ScenarioConfig(m_ris=256, m_ue=4, rotations=8, refine_levels=1)
        system = ex.build_system(cfg, 256)
        rng = np.random.default_rng(6)
        rb, ub = system.ris_books, system.ue_books
        w_ris = np.stack([np.kron(rb[0].codeword(i), rb[1].codeword(j))
                          for i in range(rb[0].total_states) for j in range(rb[1].total_states)], axis=1)
        w_ue = np.stack([np.kron(ub[0].codeword(i), ub[1].codeword(j))
                         for i in range(ub[0].total_states) for j in range(ub[1].total_states)], axis=1)
        v = max(book.layers for book in (*rb, *ub))
        budget = 4 * math.ceil(math.log2(cfg.k_beams)) + cfg.rotations
        worst_db, worst_axis = -np.inf, 0
        for trial in range(200):
            h = ex.sample_ris_ue(rng, cfg, system)
            assert len(h.paths) == 1
            measure = ex.training_measure(system, h, system.g_opt, 0.0, rng)
            r = hierarchical_search(measure, rb, ub, rotations=cfg.rotations, levels=cfg.refine_levels)
            # exhaustive oracle over every codeword pair
            v_eff = system.beta * h.matrix * (ex.incidence_removal(system) * system.g_opt.apply(system.precoder))
            best = float(np.max(np.abs(w_ue.conj().T @ v_eff @ w_ris) ** 2))
            got = measure(r.ris_weights, r.ue_weights)
            worst_db = max(worst_db, 10 * math.log10(best / got))
            worst_axis = max(worst_axis, *(a + b for a, b in zip(r.axis_measurements, r.refine_axis_measurements)))
        assert v == math.ceil(math.log2(cfg.k_beams))
        ok = worst_db <= 3.0 and worst_axis <= budget
        check(6, ok, f"worst loss vs exhaustive {worst_db:.3g} dB <= 3 dB; max measurements per axis "
                     f"{worst_axis} <= {budget} over 200 channels")


class TestReweighting:
    def test_criterion_7_optimizer_properties(self):
        rng = np.random.default_rng(7)
        worst_rise, worst_grad, worst_ls = -np.inf, 0.0, 0.0
        for _ in range(50):
            n, l = 64, 4
            T = complex_normal(rng, (n, 1, l))
            y = T @ complex_normal(rng, l) + complex_normal(rng, (n, 1), 0.01)
            cfg = ReweightConfig()
            z = least_squares(T, y)
            for _ in range(20):
                res = float(np.linalg.norm(y.ravel() - T.reshape(n, l) @ z))
                state = ReweightState(z, cfg.zeta(res), cfg.delta)
                z_new = reweight_step(state, T, y)
                before, after = surrogate(z, state, T, y), surrogate(z_new, state, T, y)
                worst_rise = max(worst_rise, (after - before) / max(1.0, abs(before)))
                scale = np.linalg.norm(T.reshape(n, l).conj().T @ y.ravel()) + np.max(np.diag(state.D)) / state.zeta
                worst_grad = max(worst_grad, np.linalg.norm(surrogate_gradient(z_new, state, T, y)) / scale)
                z = z_new
            z_ls = least_squares(T, y)
            z_ridge = reweight_step(ReweightState(z_ls, 1e12, cfg.delta), T, y)
            worst_ls = max(worst_ls, np.linalg.norm(z_ridge - z_ls) / np.linalg.norm(z_ls))
        ok = worst_rise <= 1e-12 and worst_grad <= 1e-8 and worst_ls <= 1e-8
        check(7, ok, f"max surrogate rise {worst_rise:.3g} <= 1e-12; gradient {worst_grad:.3g} <= 1e-8 scale; "
                     f"ridge-LS gap {worst_ls:.3g} <= 1e-8")


class TestTracking:
    TRIALS = 10

    def test_criterion_8_tracking(self):
        cfg = ScenarioConfig(trials=self.TRIALS)
        system = ex.build_system(cfg, cfg.m_ris)
        bw = half_power_beamwidth(system.ris)
        limit = (bw / 2) ** 2

        # constant-rate segment: per-angle MSE over trials, up to each trial's first re-estimation
        rates = np.full(cfg.tracking_steps, math.radians(cfg.rate_deg_per_step))
        sq = []
        for trial in range(self.TRIALS):
            out = ex.run_tracking_trial(cfg, trial, rates, with_baseline=False)
            first = out.trace.events[0] if out.trace.events else math.inf
            sq.append([s.sq_error[2:] for s in out.trace.steps if s.time < first])
        depth = min(len(s) for s in sq)
        mse = np.mean([np.asarray(s[:depth]) for s in sq], axis=0)          # (steps, 4)
        seg_ok = depth > 0 and float(mse.max()) < limit
        seg_ratio = float(mse.max()) / limit

        # static -> moving -> static
        outcomes = ex.run_tracking_scenario(cfg)
        initial = float(np.mean([o.initial_nmse for o in outcomes]))
        final_phase = cfg.static_steps + cfg.moving_steps
        post = float(np.mean([np.mean([s.nmse for s in o.trace.steps if s.time >= final_phase])
                              for o in outcomes]))
        base = float(np.mean([o.baseline_nmse[-1] for o in outcomes]))
        events = sum(len(o.trace.events) for o in outcomes)
        ok = seg_ok and events > 0 and post <= 2 * initial and 0.3 <= base <= 0.7
        check(8, ok, f"max angle MSE / (bw/2)^2 = {seg_ratio:.3g} over {depth} pre-event steps; "
                     f"post-re-estimation NMSE {post:.3g} <= 2 x initial {initial:.3g}; "
                     f"baseline terminal NMSE {base:.3g} in [0.3, 0.7]")


class TestDeterminism:
    def test_criterion_9_identical_csv_bodies(self, tmp_path):
        ini = tmp_path / "small.ini"
        ini.write_text("[scenario]\nm_bs = 16\nm_ris = 16\nm_ris_list = 16, 64\nu_p_list = 8, 32\n"
                       "snr_db = 0, 15\ntrials = 2\npattern_trials = 2\npattern_el_points = 46\n"
                       "pattern_az_points = 91\nstatic_steps = 5\nmoving_steps = 20\n")
        files = 0
        for cmd in ("nmse-sweep", "beam-pattern", "tracking", "full-pipeline"):
            bodies = []
            for run in ("a", "b"):
                out = tmp_path / run / cmd
                assert main([cmd, "--config", str(ini), "--out", str(out), "--no-plots"]) == 0
                bodies.append({p.relative_to(out): io.table_body(p.read_text())
                               for p in sorted(out.rglob("*.csv"))})
            assert bodies[0] and bodies[0] == bodies[1], cmd
            files += len(bodies[0])
        check(9, True, f"{files} CSV bodies byte-identical across two runs of each subcommand")
