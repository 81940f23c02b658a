"""Monte Carlo harness: trial generation, ROC estimation, and summary metrics.

Each trial draws a fresh geometry, channel, and waveform realization (the
topology can be frozen for variance-reduction studies), simulates energies
under both hypotheses, and evaluates the selected detectors.  Trials receive
independent generator streams keyed by trial index, so results do not depend
on execution order or worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import detectors as det
from .estimators import global_mle, local_mle, summary_moments
from .model import (
    ChannelConfig,
    EnergyMatrix,
    Hypothesis,
    ModelConfig,
    Topology,
    sample_channel,
    sample_topology,
    simulate_energy,
    theta_from_channel,
)
from .theory import cdf_h1, psi_from_theta, quantile_h0

__all__ = [
    "DETECTOR_NAMES",
    "Scenario",
    "MonteCarloResult",
    "RocCurve",
    "run_monte_carlo",
    "statistic_values",
    "empirical_croc",
    "pmd_at_pfa",
    "theory_psi_draws",
    "theory_pmd_samples",
    "theory_threshold_pmd",
    "deflection",
]

DETECTOR_NAMES = ("glrt", "lmp", "lr", "md", "sd", "smc", "sse", "me", "rao")


@dataclass(frozen=True)
class Scenario:
    """One Monte Carlo experiment definition.

    ``snr_db`` drives the symbol energy per channel draw (the energy is set
    so that the mean channel power of the draw hits the target SNR); when it
    is ``None`` the fixed ``model.symbol_energy`` is used instead.
    """

    model: ModelConfig
    channel: ChannelConfig
    snr_db: float | None
    runs: int
    freeze_topology: bool = False
    detectors: tuple[str, ...] = DETECTOR_NAMES

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        unknown = set(self.detectors) - set(DETECTOR_NAMES)
        if unknown:
            raise ValueError(f"unknown detectors: {sorted(unknown)}")
        if self.snr_db is None and self.model.symbol_energy is None:
            raise ValueError("either snr_db or model.symbol_energy must be set")


@dataclass(frozen=True)
class MonteCarloResult:
    """Collected per-trial statistics under both hypotheses.

    Trials whose joint MLE failed to converge are excluded from both lists
    and counted in ``excluded``; the exclusion is warned about, never silent.
    """

    h0: list[det.DetectorSample]
    h1: list[det.DetectorSample]
    excluded: int
    runs: int


@dataclass(frozen=True)
class RocCurve:
    """Empirical complementary ROC with binomial standard errors."""

    thresholds: np.ndarray
    pfa: np.ndarray
    pmd: np.ndarray
    pfa_stderr: np.ndarray
    pmd_stderr: np.ndarray


def _trial_rng(base_seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=key))


def _frozen_topology(scenario: Scenario, base_seed: int) -> Topology:
    # Reserved stream: trial streams use keys (0,) .. (runs - 1,).
    rng = _trial_rng(base_seed, (scenario.runs,))
    return sample_topology(scenario.model.num_nodes, scenario.channel, rng)


def _symbol_energy(scenario: Scenario, sigma2: np.ndarray) -> float:
    if scenario.snr_db is None:
        return float(scenario.model.symbol_energy)
    snr_linear = 10.0 ** (scenario.snr_db / 10.0)
    return float(snr_linear * scenario.model.noise_power / sigma2.mean())


def _evaluate(
    data: EnergyMatrix,
    m: int,
    selection: tuple[str, ...],
    theta_true: np.ndarray,
) -> tuple[det.DetectorSample, bool]:
    """Evaluate the selected statistics on one data matrix."""
    sample = det.DetectorSample()
    converged = True
    if "glrt" in selection:
        fit = global_mle(data, m)
        converged = fit.converged
        sample.glrt = det.glrt_statistic(data, m, fit.theta)
    if "lmp" in selection:
        sample.lmp, sample.lmp_locals = det.lmp_statistic(data, m)
    if "lr" in selection:
        sample.lr = det.lr_statistic(data, m, theta_true)
    if "md" in selection:
        sample.md = det.mean_detector(data)
    if "sd" in selection:
        sample.sd = det.square_detector(data)
    if "smc" in selection:
        sample.smc = det.smc_detector(data)
    if "sse" in selection or "me" in selection:
        sse, me = det.eigen_detectors(data)
        if "sse" in selection:
            sample.sse = sse
        if "me" in selection:
            sample.me = me
    if "rao" in selection:
        sample.rao = det.rao_detector(data, m)
    _check_sample(sample, data.num_nodes, data.num_windows, converged)
    return sample, converged


def _check_sample(
    sample: det.DetectorSample, n: int, num_windows: int, converged: bool
) -> None:
    """Internal consistency of the likelihood-ratio statistics on every trial."""
    if not converged:
        return
    has_glrt = not math.isnan(sample.glrt)
    has_lmp = not math.isnan(sample.lmp)
    if n == 1 and has_glrt and has_lmp:
        if abs(sample.glrt - 2.0 * sample.lmp / num_windows) > 1e-8:
            raise RuntimeError(
                "single-node GLRT and marginal-product statistics disagree"
            )
        return
    if has_glrt and sample.glrt < -1e-9:
        raise RuntimeError(f"negative GLRT statistic {sample.glrt}")
    if has_lmp and sample.lmp < -1e-9:
        raise RuntimeError(f"negative marginal-product statistic {sample.lmp}")


def _run_block(
    scenario: Scenario,
    indices: range,
    base_seed: int,
    frozen: Topology | None,
) -> tuple[list[det.DetectorSample], list[det.DetectorSample], int]:
    h0: list[det.DetectorSample] = []
    h1: list[det.DetectorSample] = []
    excluded = 0
    m = scenario.model.samples_per_window
    for index in indices:
        rng = _trial_rng(base_seed, (index,))
        topology = frozen if frozen is not None else sample_topology(
            scenario.model.num_nodes, scenario.channel, rng
        )
        channel = sample_channel(topology, scenario.channel, rng)
        energy = _symbol_energy(scenario, channel.sigma2)
        theta_true = theta_from_channel(
            channel, energy, scenario.model.noise_power
        )
        config = replace(scenario.model, symbol_energy=energy)
        data_h0 = simulate_energy(channel, config, Hypothesis.H0, rng)
        data_h1 = simulate_energy(channel, config, Hypothesis.H1, rng)
        sample_h0, ok_h0 = _evaluate(data_h0, m, scenario.detectors, theta_true)
        sample_h1, ok_h1 = _evaluate(data_h1, m, scenario.detectors, theta_true)
        if ok_h0 and ok_h1:
            h0.append(sample_h0)
            h1.append(sample_h1)
        else:
            excluded += 1
    return h0, h1, excluded


def run_monte_carlo(
    scenario: Scenario, seed: int | None = None, jobs: int = 1
) -> MonteCarloResult:
    """Run the scenario's trials and collect detector samples per hypothesis.

    Parameters
    ----------
    scenario : Scenario
        Experiment definition.
    seed : int, optional
        Master seed; defaults to ``scenario.model.seed``.
    jobs : int
        Worker processes.  Results are identical for any worker count.
    """
    base_seed = scenario.model.seed if seed is None else seed
    frozen = _frozen_topology(scenario, base_seed) if scenario.freeze_topology else None
    runs = scenario.runs
    if jobs > 1 and runs > 1:
        chunk = math.ceil(runs / jobs)
        blocks = [range(start, min(start + chunk, runs)) for start in range(0, runs, chunk)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(
                pool.map(
                    _run_block,
                    [scenario] * len(blocks),
                    blocks,
                    [base_seed] * len(blocks),
                    [frozen] * len(blocks),
                )
            )
        h0 = [s for part in parts for s in part[0]]
        h1 = [s for part in parts for s in part[1]]
        excluded = sum(part[2] for part in parts)
    else:
        h0, h1, excluded = _run_block(scenario, range(runs), base_seed, frozen)
    if excluded:
        warnings.warn(
            f"excluded {excluded} of {runs} trials with non-converged joint MLE",
            RuntimeWarning,
            stacklevel=2,
        )
    return MonteCarloResult(h0=h0, h1=h1, excluded=excluded, runs=runs)


def statistic_values(samples: list[det.DetectorSample], detector: str) -> np.ndarray:
    """Extract one detector's values from a sample list as an array."""
    if detector not in DETECTOR_NAMES:
        raise ValueError(f"unknown detector {detector!r}")
    return np.array([getattr(sample, detector) for sample in samples])


def empirical_croc(
    samples_h0: list[det.DetectorSample],
    samples_h1: list[det.DetectorSample],
    detector: str,
) -> RocCurve:
    """Exact empirical complementary ROC for one detector.

    The threshold grid is every distinct signal-absent statistic value plus
    the extremes of the signal-present values, which reproduces the empirical
    curve without binning artifacts.  Standard errors are binomial.
    """
    if len(samples_h0) < 100 or len(samples_h1) < 100:
        raise ValueError("need at least 100 samples per hypothesis")
    h0 = np.sort(statistic_values(samples_h0, detector))
    h1 = np.sort(statistic_values(samples_h1, detector))
    thresholds = np.unique(np.concatenate([h0, [h1[0], h1[-1]]]))
    pfa = 1.0 - np.searchsorted(h0, thresholds, side="right") / h0.size
    pmd = np.searchsorted(h1, thresholds, side="right") / h1.size
    return RocCurve(
        thresholds=thresholds,
        pfa=pfa,
        pmd=pmd,
        pfa_stderr=np.sqrt(pfa * (1.0 - pfa) / h0.size),
        pmd_stderr=np.sqrt(pmd * (1.0 - pmd) / h1.size),
    )


def pmd_at_pfa(
    h0_values: np.ndarray, h1_values: np.ndarray, pfa_target: float
) -> tuple[float, float]:
    """Miss probability at the smallest threshold meeting the false-alarm target.

    The threshold is the empirical ``(1 - pfa_target)`` quantile of the
    signal-absent values: the ``(k+1)``-th largest with
    ``k = floor(n * pfa_target)``.

    Returns
    -------
    tuple
        ``(pmd, threshold)``.
    """
    if not 0.0 < pfa_target < 1.0:
        raise ValueError("pfa_target must be in (0, 1)")
    h0 = np.sort(np.asarray(h0_values, dtype=float))
    h1 = np.asarray(h1_values, dtype=float)
    exceed = int(np.floor(h0.size * pfa_target + 1e-9))
    threshold = float(h0[h0.size - 1 - exceed])
    return float(np.mean(h1 <= threshold)), threshold


def theory_psi_draws(
    scenario: Scenario, channel_draws: int, seed: int | None = None
) -> np.ndarray:
    """Noncentrality vectors from fresh channel draws; shape ``(draws, N)``.

    Geometry and channel are drawn exactly as the Monte Carlo harness does,
    but on separate generator streams so theory curves stay independent of
    the empirical trials.
    """
    base_seed = scenario.model.seed if seed is None else seed
    model = scenario.model
    psis = np.empty((channel_draws, model.num_nodes))
    frozen = _frozen_topology(scenario, base_seed) if scenario.freeze_topology else None
    for draw in range(channel_draws):
        rng = _trial_rng(base_seed, (draw, 1))
        topology = frozen if frozen is not None else sample_topology(
            model.num_nodes, scenario.channel, rng
        )
        channel = sample_channel(topology, scenario.channel, rng)
        energy = _symbol_energy(scenario, channel.sigma2)
        theta_true = theta_from_channel(channel, energy, model.noise_power)
        psis[draw] = psi_from_theta(
            theta_true, model.num_windows, model.samples_per_window
        )
    return psis


def theory_pmd_samples(
    scenario: Scenario,
    threshold: float,
    channel_draws: int,
    seed: int | None = None,
) -> np.ndarray:
    """Per-channel-draw theoretical miss probabilities at a fixed threshold.

    Maps each channel draw to its noncentrality vector and evaluates the
    alternative law at ``threshold`` (doubled-log scale).
    """
    psis = theory_psi_draws(scenario, channel_draws, seed)
    return np.array([cdf_h1(threshold, psi) for psi in psis])


def theory_threshold_pmd(
    scenario: Scenario,
    pfa_target: float,
    channel_draws: int = 200,
    seed: int | None = None,
) -> tuple[float, float]:
    """Theoretical threshold and channel-averaged miss probability.

    The threshold is the null-law quantile at ``1 - pfa_target`` on the
    doubled-log scale; the miss probability averages the alternative law over
    fresh channel draws.

    Returns
    -------
    tuple
        ``(threshold, pmd)``.
    """
    threshold = quantile_h0(1.0 - pfa_target, scenario.model.num_nodes)
    values = theory_pmd_samples(scenario, threshold, channel_draws, seed)
    return threshold, float(values.mean())


def deflection(h0_values: np.ndarray, h1_values: np.ndarray) -> float:
    """Deflection coefficient ``|mean_1 - mean_0| / sqrt(var_0)``.

    Population-style variance (no degrees-of-freedom correction).
    """
    h0 = np.asarray(h0_values, dtype=float)
    h1 = np.asarray(h1_values, dtype=float)
    if h0.size < 2:
        raise ValueError("need at least two signal-absent samples")
    variance = float(np.var(h0))
    if variance == 0.0:
        raise ValueError("signal-absent samples have zero variance")
    return float(abs(h1.mean() - h0.mean()) / np.sqrt(variance))
