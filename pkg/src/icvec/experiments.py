"""Experiment runners behind the CLI and the HTTP service.

Every runner is a pure function of (scenario, seed): rerunning produces
byte-identical CSV bodies at any thread count.  Trials draw from disjoint
sub-streams and results are reduced in trial order, so the thread pool
only changes wall-clock time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import detection, estimation, metrics
from .convergence import (
    build_split_detection,
    build_split_estimation,
    detection_jacobi_deviation,
    estimation_jacobi_deviation,
    spectral_radius,
)
from .model import (
    STREAM_CHANNEL,
    STREAM_NOISE,
    STREAM_SYMBOLS,
    STREAM_TONE,
    STREAM_TRAINING,
    STREAM_TRIAL,
    AlphaProfile,
    Constellation,
    ScenarioConfig,
    draw_symbols,
    substream,
    synth_channel,
    transmit,
)
from .scenarios import (
    ChanestScenario,
    ConvergenceScenario,
    MudScenario,
    ThroughputScenario,
    parse_scenario,
    scenario_to_dict,
)
from .training import gen_training, orthogonalize

__all__ = ["ExperimentResult", "run_experiment", "run_chanest", "run_mud",
           "run_throughput", "run_convergence"]


@dataclass
class ExperimentResult:
    """CSV bodies keyed by file name plus a JSON-able summary."""

    experiment: str
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.10g" % float(value)
    return str(value)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _map_trials(fn, n_trials: int, threads: int):
    """Run fn(trial) for trial = 0..n-1, results returned in trial order."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n_trials)))
    return [fn(t) for t in range(n_trials)]


def _num(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# chanest: MSE vs iterations with the CRB reference
# ---------------------------------------------------------------------------

def run_chanest(scenario: ChanestScenario, threads: int = 1) -> ExperimentResult:
    link = scenario.link
    K, N = link.num_operators, link.lines_per_operator
    T = link.resolved_training_length()
    n_iter = scenario.iterations
    result = ExperimentResult(experiment="chanest")
    curves = {}

    for snr_db in scenario.snr_db:
        sigma2 = 10.0 ** (-snr_db / 10.0)
        for alpha in scenario.alpha:
            cfg = ScenarioConfig(num_operators=K, lines_per_operator=N,
                                 training_length=T, alpha=alpha, sigma2=sigma2,
                                 constellation=Constellation.parse(link.constellation),
                                 max_iterations=n_iter, seed=link.seed)

            def one_trial(t):
                ch = synth_channel(cfg, substream(cfg.seed, STREAM_TRIAL, t,
                                                  STREAM_CHANNEL))
                ts = gen_training(cfg, substream(cfg.seed, STREAM_TRIAL, t,
                                                 STREAM_TRAINING))
                if scenario.training == "orthogonal":
                    ts = orthogonalize(ts)
                res = estimation.run_ic_estimation(
                    cfg, ch, training=ts, n_iterations=n_iter,
                    record_states=True, round_mode=scenario.round_mode,
                    trial=t)
                per_iter = [metrics.block_error_power(s, ch) for s in res.states]
                return per_iter, res.trace.msgs_sent, res.trace.residual

            outcomes = _map_trials(one_trial, scenario.trials, threads)
            err_self = np.zeros(n_iter)
            err_alien = np.zeros(n_iter)
            residual = np.zeros(n_iter)
            for per_iter, _, res_norms in outcomes:
                for i, (es, ea) in enumerate(per_iter):
                    err_self[i] += es
                    err_alien[i] += ea
                residual += np.asarray(res_norms)
            residual /= scenario.trials
            p_self, p_alien = metrics.ensemble_block_power(K, N, alpha)
            crb_db = estimation.normalized_crb_db(cfg)
            rows = []
            for i in range(n_iter):
                mse_self = 10 * np.log10(err_self[i] / scenario.trials / p_self)
                if p_alien > 0:
                    mse_alien = 10 * np.log10(err_alien[i] / scenario.trials / p_alien)
                else:
                    mse_alien = metrics.DB_FLOOR
                rows.append([i + 1, _num(mse_self), _num(mse_alien), _num(crb_db),
                             _num(residual[i]), outcomes[0][1][i]])
            name = f"chanest_snr{_fmt(snr_db)}_alpha{_fmt(alpha)}.csv"
            header = ["iteration", "mse_self_db", "mse_alien_db", "crb_db",
                      "residual", "msgs_sent"]
            result.files[name] = _csv(header, rows)
            curves[f"snr{_fmt(snr_db)}_alpha{_fmt(alpha)}"] = {
                "final_mse_self_db": rows[-1][1],
                "final_mse_alien_db": rows[-1][2],
                "crb_db": _num(crb_db),
            }
    result.summary = {"curves": curves, "trials": scenario.trials,
                      "iterations": n_iter, "training": scenario.training}
    return result


# ---------------------------------------------------------------------------
# mud: SNR at the decision variable across schemes
# ---------------------------------------------------------------------------

def _pooled_snr_db(err_power: float, sig_power: float) -> float:
    if err_power <= 0:
        return metrics.SNR_CAP_DB
    return min(10.0 * np.log10(sig_power / err_power), metrics.SNR_CAP_DB)


def _mud_cell(link, K, alpha, sigma2, scenario, threads):
    """All schemes on shared channel/symbol/noise draws; paired trials."""
    N = link.lines_per_operator
    cfg = ScenarioConfig(num_operators=K, lines_per_operator=N,
                         training_length=max(link.resolved_training_length(),
                                             K * N + 1),
                         alpha=max(alpha, 0.0), sigma2=sigma2,
                         constellation=Constellation.parse(link.constellation),
                         seed=link.seed)
    const = cfg.constellation
    n_iter = scenario.iterations

    def one_trial(t):
        ch = synth_channel(cfg, substream(cfg.seed, STREAM_TRIAL, t, STREAM_CHANNEL))
        sym = draw_symbols(cfg, scenario.frame_length,
                           substream(cfg.seed, STREAM_TRIAL, t, STREAM_SYMBOLS))
        rx = transmit(ch, sym, sigma2,
                      substream(cfg.seed, STREAM_TRIAL, t, STREAM_NOISE))
        x = sym.stacked
        sig = float(np.sum(np.abs(x) ** 2))
        out = {}
        for scheme in scenario.schemes:
            if scheme == "centralized":
                o = detection.centralized_em(rx.y, ch.full_matrix, sigma2, const,
                                             iterations=n_iter)
                err = float(np.sum(np.abs(o.soft - x) ** 2))
                ser = int(np.count_nonzero(o.hard != x))
                out[scheme] = [(err, sig, ser, x.size, sigma2, 0)]
            elif scheme == "nc":
                errs = sers = 0.0
                for k in range(K):
                    o = detection.no_coop_mud(rx.operator(k), ch.block(k, k),
                                              alpha, K, N, sigma2, const)
                    errs += float(np.sum(np.abs(o.soft - sym.operator(k)) ** 2))
                    sers += int(np.count_nonzero(o.hard != sym.operator(k)))
                out[scheme] = [(errs, sig, int(sers), x.size, sigma2, 0)]
            else:
                if scheme == "dc":
                    run = detection.run_dc_mud(
                        ch, rx, const, sigma2, iterations=n_iter,
                        decisions="soft", criterion=scenario.criterion,
                        true_symbols=sym)
                else:
                    run = detection.run_ic_mud(
                        ch, rx, const, sigma2, iterations=n_iter,
                        decisions="soft" if scheme == "ic-soft" else "hard",
                        criterion=scenario.criterion, true_symbols=sym)
                tr = run.trace
                cell = []
                for i in range(len(tr.iterations)):
                    err = sig / 10 ** (tr.snr_d_db[i] / 10) if np.isfinite(
                        tr.snr_d_db[i]) else 0.0
                    cell.append((err, sig, tr.symbol_errors[i], tr.total_symbols[i],
                                 tr.sigma_n2[i], tr.msgs_sent[i]))
                out[scheme] = cell
        return out

    outcomes = _map_trials(one_trial, scenario.trials, threads)
    rows = []
    for scheme in scenario.schemes:
        iters = len(outcomes[0][scheme])
        for i in range(iters):
            err = sum(o[scheme][i][0] for o in outcomes)
            sig = sum(o[scheme][i][1] for o in outcomes)
            errs = sum(o[scheme][i][2] for o in outcomes)
            total = sum(o[scheme][i][3] for o in outcomes)
            sig_n2 = float(np.mean([o[scheme][i][4] for o in outcomes]))
            msgs = outcomes[0][scheme][i][5]
            rows.append([scheme, i + 1, _num(_pooled_snr_db(err, sig)),
                         _num(errs / total), _num(sig_n2), msgs])
    return rows


def run_mud(scenario: MudScenario, threads: int = 1) -> ExperimentResult:
    link = scenario.link
    result = ExperimentResult(experiment="mud")
    rows = []
    for K in scenario.operator_counts():
        for snr_db in scenario.snr_db:
            sigma2 = 10.0 ** (-snr_db / 10.0)
            for alpha in scenario.alpha_values():
                cell = _mud_cell(link, K, alpha, sigma2, scenario, threads)
                rows.extend([[K, _num(snr_db), _num(alpha)] + r for r in cell])
    header = ["k", "snr_db", "alpha", "scheme", "iteration", "snr_d_db", "ser",
              "sigma_n2", "msgs_sent"]
    result.files["mud.csv"] = _csv(header, rows)
    final = {}
    for row in rows:
        key = f"k{row[0]}_snr{row[1]}_alpha{row[2]}_{row[3]}"
        final[key] = {"snr_d_db": row[5], "ser": row[6], "iteration": row[4]}
    result.summary = {"final": final, "trials": scenario.trials,
                      "iterations": scenario.iterations,
                      "frame_length": scenario.frame_length}
    return result


# ---------------------------------------------------------------------------
# throughput: per-tone bit loading and band totals
# ---------------------------------------------------------------------------

def _per_line_snr_db(soft: np.ndarray, truth: np.ndarray) -> np.ndarray:
    sig = np.mean(np.abs(truth) ** 2, axis=1)
    err = np.mean(np.abs(soft - truth) ** 2, axis=1)
    out = np.full(sig.shape, metrics.SNR_CAP_DB)
    ok = err > 0
    out[ok] = np.minimum(10 * np.log10(sig[ok] / err[ok]), metrics.SNR_CAP_DB)
    return out


def run_throughput(scenario: ThroughputScenario, threads: int = 1) -> ExperimentResult:
    link = scenario.link
    K, N = link.num_operators, link.lines_per_operator
    const = Constellation.parse(link.constellation)
    gap = metrics.GapModel(gamma_db=scenario.gap.gamma_db,
                           max_bits=scenario.gap.max_bits,
                           framing_overhead=scenario.gap.framing_overhead,
                           tone_spacing_hz=scenario.gap.tone_spacing_hz)
    alpha_prof = AlphaProfile(
        freq_mhz=np.asarray(scenario.alpha_profile_db.freq_mhz),
        alpha=10.0 ** (np.asarray(scenario.alpha_profile_db.values) / 20.0))
    if scenario.insertion_loss_db is not None:
        il = scenario.insertion_loss_db
        il_at = lambda f: float(np.interp(f, il.freq_mhz, il.values))  # noqa: E731
    else:
        il_at = lambda f: 0.0  # noqa: E731
    freqs = np.linspace(scenario.start_mhz, scenario.stop_mhz, scenario.tones)

    def one_tone(t):
        f = float(freqs[t])
        alpha = float(alpha_prof.at(f))
        sigma2 = metrics.sigma2_from_psd(scenario.signal_psd_dbm_hz,
                                         scenario.noise_psd_dbm_hz, il_at(f))
        cfg = ScenarioConfig(num_operators=K, lines_per_operator=N,
                             training_length=K * N + 1, alpha=max(alpha, 0.0),
                             sigma2=sigma2, constellation=const, seed=link.seed)
        ch = synth_channel(cfg, substream(cfg.seed, STREAM_TONE, t, STREAM_CHANNEL))
        sym = draw_symbols(cfg, scenario.frame_length,
                           substream(cfg.seed, STREAM_TONE, t, STREAM_SYMBOLS))
        rx = transmit(ch, sym, sigma2,
                      substream(cfg.seed, STREAM_TONE, t, STREAM_NOISE))
        tone = {}
        for scheme in scenario.schemes:
            if scheme == "centralized":
                o = detection.centralized_em(rx.y, ch.full_matrix, sigma2, const,
                                             iterations=scenario.iterations)
                snrs = _per_line_snr_db(o.soft, sym.stacked)
            elif scheme == "equal-share":
                # alternate tone ownership: only one operator transmits here
                k = t % K
                y = ch.block(k, k) @ sym.operator(k)
                noise_rng = substream(cfg.seed, STREAM_TONE, t, STREAM_NOISE, 1)
                y = y + np.sqrt(sigma2 / 2) * (
                    noise_rng.standard_normal(y.shape)
                    + 1j * noise_rng.standard_normal(y.shape))
                o = detection.mmse_centralized(y, ch.block(k, k), sigma2, const)
                snrs = _per_line_snr_db(o.soft, sym.operator(k))
            elif scheme == "ic":
                run = detection.run_ic_mud(ch, rx, const, sigma2,
                                           iterations=scenario.iterations,
                                           decisions="soft", true_symbols=sym)
                soft = np.concatenate([o.soft for o in run.outputs], axis=0)
                snrs = _per_line_snr_db(soft, sym.stacked)
            elif scheme == "dc":
                run = detection.run_dc_mud(ch, rx, const, sigma2,
                                           iterations=scenario.iterations,
                                           decisions="soft", true_symbols=sym)
                soft = np.concatenate([o.soft for o in run.outputs], axis=0)
                snrs = _per_line_snr_db(soft, sym.stacked)
            else:  # nc
                parts = []
                for k in range(K):
                    o = detection.no_coop_mud(rx.operator(k), ch.block(k, k),
                                              alpha, K, N, sigma2, const)
                    parts.append(_per_line_snr_db(o.soft, sym.operator(k)))
                snrs = np.concatenate(parts)
            tone[scheme] = float(np.sum([metrics.bit_loading(s, gap) for s in snrs]))
        return f, alpha, sigma2, tone

    tones = _map_trials(one_tone, scenario.tones, threads)
    tone_rows = []
    for f, alpha, sigma2, tone in tones:
        for scheme in scenario.schemes:
            tone_rows.append([_num(f), _num(alpha), _num(sigma2), scheme,
                              _num(tone[scheme])])
    result = ExperimentResult(experiment="throughput")
    result.files["throughput_tones.csv"] = _csv(
        ["freq_mhz", "alpha", "sigma2", "scheme", "bits"], tone_rows)

    band_rows = []
    summary = {}
    for lo, hi in scenario.bands_mhz:
        band = f"{_fmt(lo)}-{_fmt(hi)}MHz"
        for scheme in scenario.schemes:
            bits = [tone[scheme] for f, _, _, tone in tones if lo <= f <= hi]
            mbps = metrics.throughput(bits, gap)
            band_rows.append([scheme, band, _num(mbps)])
            summary.setdefault(band, {})[scheme] = _num(mbps)
    result.files["throughput.csv"] = _csv(["scheme", "band", "mbps"], band_rows)
    result.summary = {
        "bands": summary,
        "note": ("desk-scale synthetic coupling profile; absolute Mbps are "
                 "not comparable to any measured-cable result"),
    }
    return result


# ---------------------------------------------------------------------------
# convergence: spectral radii and mechanical equivalence
# ---------------------------------------------------------------------------

def run_convergence(scenario: ConvergenceScenario, threads: int = 1) -> ExperimentResult:
    link = scenario.link
    N = link.lines_per_operator
    result = ExperimentResult(experiment="convergence")
    rows = []
    worst = {"detection": 0.0, "estimation": 0.0}

    for K in scenario.operator_counts():
        T = max(link.resolved_training_length(), K * N + 1)
        for alpha in scenario.alpha:
            def one_seed(s):
                cfg = ScenarioConfig(num_operators=K, lines_per_operator=N,
                                     training_length=T, alpha=alpha,
                                     sigma2=1.0, seed=link.seed)
                ch = synth_channel(cfg, substream(cfg.seed, STREAM_TRIAL, s,
                                                  STREAM_CHANNEL))
                rho_det = spectral_radius(build_split_detection(ch))
                ts = gen_training(cfg, substream(cfg.seed, STREAM_TRIAL, s,
                                                 STREAM_TRAINING))
                if scenario.training == "orthogonal":
                    ts = orthogonalize(ts)
                rho_est = spectral_radius(build_split_estimation(ts))
                return rho_det, rho_est

            radii = _map_trials(one_seed, scenario.seeds, threads)
            for s, (rho_det, rho_est) in enumerate(radii):
                rows.append([s, _num(alpha), K, N, "detection", "-", _num(rho_det)])
                rows.append([s, _num(alpha), K, N, "estimation",
                             scenario.training, _num(rho_est)])
                worst["detection"] = max(worst["detection"], rho_det)
                worst["estimation"] = max(worst["estimation"], rho_est)

    result.files["convergence_rho.csv"] = _csv(
        ["seed", "alpha", "k", "n", "split", "training", "rho"], rows)

    summary = {"max_rho": {k: _num(v) for k, v in worst.items()},
               "seeds": scenario.seeds}
    if scenario.equivalence.enabled:
        eq = scenario.equivalence
        K = scenario.operator_counts()[0]
        alpha = scenario.alpha[0]
        Ne = eq.lines_per_operator
        T = max(eq.training_length, K * Ne + 1)
        eq_rows = []

        def one_eq(s):
            cfg = ScenarioConfig(num_operators=K, lines_per_operator=Ne,
                                 training_length=T, alpha=alpha,
                                 sigma2=0.05, seed=link.seed)
            ch = synth_channel(cfg, substream(cfg.seed, STREAM_TRIAL, 10_000 + s,
                                              STREAM_CHANNEL))
            res = estimation.run_ic_estimation(
                cfg, ch, n_iterations=eq.iterations, record_states=True,
                round_mode="jacobi", trial=10_000 + s)
            dev_est = estimation_jacobi_deviation(res.training, res.observations,
                                                  res.states)
            sym = draw_symbols(cfg, eq.frame_length,
                               substream(cfg.seed, STREAM_TRIAL, 10_000 + s,
                                         STREAM_SYMBOLS))
            rx = transmit(ch, sym, cfg.sigma2,
                          substream(cfg.seed, STREAM_TRIAL, 10_000 + s,
                                    STREAM_NOISE))
            mud = detection.run_ic_mud(ch, rx, cfg.constellation, cfg.sigma2,
                                       iterations=eq.iterations,
                                       decisions="linear", true_symbols=sym,
                                       record_states=True)
            dev_det = detection_jacobi_deviation(ch, rx.y, mud.states)
            return dev_est, dev_det

        devs = _map_trials(one_eq, eq.seeds, threads)
        for s, (dev_est, dev_det) in enumerate(devs):
            eq_rows.append([s, "estimation", _num(dev_est)])
            eq_rows.append([s, "detection", _num(dev_det)])
        result.files["convergence_equiv.csv"] = _csv(
            ["seed", "split", "max_relative_deviation"], eq_rows)
        summary["max_equivalence_deviation"] = _num(
            max(max(d) for d in devs))
    result.summary = summary
    return result


_RUNNERS = {
    "chanest": run_chanest,
    "mud": run_mud,
    "throughput": run_throughput,
    "convergence": run_convergence,
}


def run_experiment(scenario, threads: int = 1) -> ExperimentResult:
    """Validate and dispatch a scenario to its runner."""
    scn = parse_scenario(scenario)
    result = _RUNNERS[scn.experiment](scn, threads=threads)
    result.summary["scenario"] = scenario_to_dict(scn)
    return result
