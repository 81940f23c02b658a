"""Batch command-line front end.

Parses a versioned JSON configuration, dispatches one of the experiment
subcommands, and writes CSV tables (UTF-8, LF line endings) plus a
``manifest.json`` sidecar recording the config hash, seed, timing, excluded
trials, and output files.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .detectors import glrt_statistic, lmp_statistic
from .estimators import global_mle
from .experiments import (
    DETECTOR_NAMES,
    Scenario,
    deflection,
    empirical_croc,
    pmd_at_pfa,
    run_monte_carlo,
    statistic_values,
    theory_psi_draws,
)
from .model import (
    ChannelConfig,
    Hypothesis,
    ModelConfig,
    SourceKind,
    sample_channel,
    sample_gaussian_approx,
    sample_topology,
    simulate_energy,
    theta_from_channel,
)
from .netsim import (
    ConsensusConfig,
    build_comm_graph,
    run_consensus,
    run_flooding_glrt,
    run_mac,
    run_pac,
)
from .theory import cdf_h0, cdf_h1, psi_from_theta, quantile_h0

__all__ = ["ConfigError", "load_config", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CONFIG_VERSION = 1

_DEFAULTS: dict[str, Any] = {
    "version": CONFIG_VERSION,
    "seed": 20240801,
    "model": {
        "num_nodes": 10,
        "samples_per_window": 50,
        "windows_per_node": 10,
        "noise_psd_dbm_per_hz": -174.0,
        "bandwidth_hz": 5.0e6,
        "source_kind": "gaussian",
        "symbol_energy": None,
    },
    "channel": {
        "intercept_db": -37.0,
        "pathloss_exponent": 4.0,
        "reference_distance_m": 10.0,
        "shadowing_std_db": 3.0,
        "area_side_m": 1600.0,
        "source_position_m": [0.0, 1000.0],
    },
    "scenario": {
        "snr_db": -11.0,
        "runs": 10000,
        "freeze_topology": False,
        "detectors": list(DETECTOR_NAMES),
        "pfa_target": 0.1,
        "snr_grid_db": [-14.0, -13.0, -12.0, -11.0, -10.0, -9.0, -8.0, -7.0, -6.0],
        "deflection_snr_grid_db": [-14.0, -13.0, -12.0, -11.0, -10.0, -9.0, -8.0],
        "theory_channel_draws": 64,
        "theory_threshold_points": 25,
    },
    "consensus": {
        "tolerance": 1e-8,
        "max_iters": 10000,
        "comm_radius_m": 800.0,
        "mac_noise_std": 0.0,
    },
    "theory_check": {
        "num_nodes": 5,
        "samples_per_window": 50,
        "windows_per_node": 200,
        "runs": 10000,
        "theta": None,
    },
    "output": {
        "plots": False,
    },
}


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with the raw dict kept for hashing."""

    raw: dict[str, Any]
    seed: int
    model: ModelConfig
    channel: ChannelConfig
    scenario: dict[str, Any]
    consensus: ConsensusConfig
    comm_radius: float
    mac_noise_std: float
    theory_check: dict[str, Any]
    plots: bool


def _merge_section(name: str, defaults: dict[str, Any], user: Any) -> dict[str, Any]:
    if not isinstance(user, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(user) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(user)
    return merged


def _require_number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number")
    return float(value)


def _require_int(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key} must be an integer")
    return value


def _require_bool(section: str, key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{section}.{key} must be a boolean")
    return value


def load_config(path: str | Path) -> RunConfig:
    """Load and strictly validate a JSON run configuration.

    Missing keys take the documented defaults; unknown keys anywhere are a
    hard error so typos cannot silently change a scientific run.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            user = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    unknown = set(user) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    version = user.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}; expected {CONFIG_VERSION}")

    merged: dict[str, Any] = {"version": CONFIG_VERSION}
    merged["seed"] = user.get("seed", _DEFAULTS["seed"])
    if isinstance(merged["seed"], bool) or not isinstance(merged["seed"], int) or merged["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    for section in ("model", "channel", "scenario", "consensus", "theory_check", "output"):
        merged[section] = _merge_section(section, _DEFAULTS[section], user.get(section, {}))

    mdl = merged["model"]
    noise_power = 10.0 ** (
        (_require_number("model", "noise_psd_dbm_per_hz", mdl["noise_psd_dbm_per_hz"]) - 30.0)
        / 10.0
    ) * _require_number("model", "bandwidth_hz", mdl["bandwidth_hz"])
    if mdl["source_kind"] not in (kind.value for kind in SourceKind):
        raise ConfigError(f"model.source_kind must be one of {[k.value for k in SourceKind]}")
    symbol_energy = mdl["symbol_energy"]
    if symbol_energy is not None:
        symbol_energy = _require_number("model", "symbol_energy", symbol_energy)
    try:
        model = ModelConfig(
            num_nodes=_require_int("model", "num_nodes", mdl["num_nodes"]),
            samples_per_window=_require_int("model", "samples_per_window", mdl["samples_per_window"]),
            num_windows=_require_int("model", "windows_per_node", mdl["windows_per_node"]),
            noise_power=noise_power,
            symbol_energy=symbol_energy,
            source_kind=SourceKind(mdl["source_kind"]),
            seed=merged["seed"],
        )
    except ValueError as exc:
        raise ConfigError(f"invalid model section: {exc}") from exc

    chn = merged["channel"]
    source_position = chn["source_position_m"]
    if (
        not isinstance(source_position, (list, tuple))
        or len(source_position) != 2
        or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in source_position)
    ):
        raise ConfigError("channel.source_position_m must be a pair of numbers")
    try:
        channel = ChannelConfig(
            intercept_db=_require_number("channel", "intercept_db", chn["intercept_db"]),
            pathloss_exponent=_require_number("channel", "pathloss_exponent", chn["pathloss_exponent"]),
            reference_distance=_require_number("channel", "reference_distance_m", chn["reference_distance_m"]),
            shadowing_std_db=_require_number("channel", "shadowing_std_db", chn["shadowing_std_db"]),
            area_side=_require_number("channel", "area_side_m", chn["area_side_m"]),
            source_position=(float(source_position[0]), float(source_position[1])),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid channel section: {exc}") from exc

    scn = dict(merged["scenario"])
    if scn["snr_db"] is not None:
        scn["snr_db"] = _require_number("scenario", "snr_db", scn["snr_db"])
    scn["runs"] = _require_int("scenario", "runs", scn["runs"])
    scn["freeze_topology"] = _require_bool("scenario", "freeze_topology", scn["freeze_topology"])
    if not isinstance(scn["detectors"], list) or not all(
        isinstance(d, str) for d in scn["detectors"]
    ):
        raise ConfigError("scenario.detectors must be a list of detector names")
    unknown_detectors = set(scn["detectors"]) - set(DETECTOR_NAMES)
    if unknown_detectors:
        raise ConfigError(f"unknown detectors: {sorted(unknown_detectors)}")
    pfa_target = _require_number("scenario", "pfa_target", scn["pfa_target"])
    if not 0.0 < pfa_target < 1.0:
        raise ConfigError("scenario.pfa_target must be in (0, 1)")
    scn["pfa_target"] = pfa_target
    for key in ("snr_grid_db", "deflection_snr_grid_db"):
        grid = scn[key]
        if not isinstance(grid, list) or not grid or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in grid
        ):
            raise ConfigError(f"scenario.{key} must be a non-empty list of numbers")
        scn[key] = [float(v) for v in grid]
    scn["theory_channel_draws"] = _require_int(
        "scenario", "theory_channel_draws", scn["theory_channel_draws"]
    )
    scn["theory_threshold_points"] = _require_int(
        "scenario", "theory_threshold_points", scn["theory_threshold_points"]
    )
    if scn["theory_channel_draws"] < 1 or scn["theory_threshold_points"] < 2:
        raise ConfigError("theory draw and grid sizes are too small")

    cns = merged["consensus"]
    try:
        consensus = ConsensusConfig(
            tolerance=_require_number("consensus", "tolerance", cns["tolerance"]),
            max_iters=_require_int("consensus", "max_iters", cns["max_iters"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid consensus section: {exc}") from exc
    comm_radius = _require_number("consensus", "comm_radius_m", cns["comm_radius_m"])
    if comm_radius <= 0:
        raise ConfigError("consensus.comm_radius_m must be positive")
    mac_noise_std = _require_number("consensus", "mac_noise_std", cns["mac_noise_std"])
    if mac_noise_std < 0:
        raise ConfigError("consensus.mac_noise_std must be nonnegative")

    tck = dict(merged["theory_check"])
    tck["num_nodes"] = _require_int("theory_check", "num_nodes", tck["num_nodes"])
    tck["samples_per_window"] = _require_int(
        "theory_check", "samples_per_window", tck["samples_per_window"]
    )
    tck["windows_per_node"] = _require_int(
        "theory_check", "windows_per_node", tck["windows_per_node"]
    )
    tck["runs"] = _require_int("theory_check", "runs", tck["runs"])
    if min(tck["num_nodes"], tck["samples_per_window"], tck["windows_per_node"], tck["runs"]) < 1:
        raise ConfigError("theory_check sizes must be >= 1")
    if tck["theta"] is not None:
        theta = tck["theta"]
        if (
            not isinstance(theta, list)
            or len(theta) != tck["num_nodes"]
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in theta)
            or any(v < 0 for v in theta)
        ):
            raise ConfigError("theory_check.theta must be a list of num_nodes nonnegative numbers")
        tck["theta"] = [float(v) for v in theta]

    plots = _require_bool("output", "plots", merged["output"]["plots"])

    return RunConfig(
        raw=merged,
        seed=merged["seed"],
        model=model,
        channel=channel,
        scenario=scn,
        consensus=consensus,
        comm_radius=comm_radius,
        mac_noise_std=mac_noise_std,
        theory_check=tck,
        plots=plots,
    )


_FROM_CONFIG = object()


def _build_scenario(config: RunConfig, snr_db: Any = _FROM_CONFIG) -> Scenario:
    scn = config.scenario
    return Scenario(
        model=config.model,
        channel=config.channel,
        snr_db=scn["snr_db"] if snr_db is _FROM_CONFIG else snr_db,
        runs=scn["runs"],
        freeze_topology=scn["freeze_topology"],
        detectors=tuple(scn["detectors"]),
    )


def _config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if value is None else value for value in row])


def _write_manifest(
    out_dir: Path,
    subcommand: str,
    config: RunConfig,
    seed: int,
    started: str,
    excluded: int,
    outputs: list[str],
) -> None:
    manifest = {
        "subcommand": subcommand,
        "config_sha256": _config_hash(config),
        "seed": seed,
        "started_utc": started,
        "finished_utc": _utc_now(),
        "excluded_trials": excluded,
        "outputs": sorted(outputs),
    }
    descriptor, tmp_path = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".json")
    try:
        with os.fdopen(descriptor, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        os.replace(tmp_path, out_dir / "manifest.json")
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _binomial_stderr(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))


def _plot_croc(out_dir: Path, detector_files: dict[str, str]) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figure, axes = plt.subplots(figsize=(6.0, 4.5))
    for detector, name in sorted(detector_files.items()):
        with open(out_dir / name, encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
        pfa = np.array([float(r["pfa"]) for r in rows])
        pmd = np.array([float(r["pmd"]) for r in rows])
        keep = (pfa > 0) & (pmd > 0)
        axes.loglog(pfa[keep], pmd[keep], label=detector)
    axes.set_xlabel("false-alarm probability")
    axes.set_ylabel("miss-detection probability")
    axes.grid(True, which="both", alpha=0.3)
    axes.legend(fontsize=8)
    figure.tight_layout()
    figure.savefig(out_dir / "croc.svg")
    plt.close(figure)
    return "croc.svg"


def _plot_rows(out_dir: Path, csv_name: str, svg_name: str, x_key: str, y_key: str) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(out_dir / csv_name, encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    figure, axes = plt.subplots(figsize=(6.0, 4.5))
    labels = sorted({(r["detector"], r.get("threshold_source", "")) for r in rows})
    for detector, source in labels:
        chosen = [
            r
            for r in rows
            if r["detector"] == detector and r.get("threshold_source", "") == source
        ]
        x = [float(r[x_key]) for r in chosen]
        y = [float(r[y_key]) for r in chosen]
        label = detector if not source else f"{detector} ({source})"
        axes.plot(x, y, marker="o", markersize=3, label=label)
    axes.set_xlabel(x_key)
    axes.set_ylabel(y_key)
    axes.grid(True, alpha=0.3)
    axes.legend(fontsize=8)
    figure.tight_layout()
    figure.savefig(out_dir / svg_name)
    plt.close(figure)
    return svg_name


def cmd_croc(config: RunConfig, out_dir: Path, seed: int, jobs: int) -> tuple[int, list[str]]:
    """Empirical complementary ROC per detector plus the theoretical curve."""
    scenario = _build_scenario(config)
    result = run_monte_carlo(scenario, seed=seed, jobs=jobs)
    outputs: list[str] = []
    detector_files: dict[str, str] = {}
    for detector in scenario.detectors:
        curve = empirical_croc(result.h0, result.h1, detector)
        name = f"croc_{detector}.csv"
        _write_csv(
            out_dir / name,
            ["threshold", "pfa", "pmd", "pfa_stderr", "pmd_stderr"],
            list(
                zip(
                    curve.thresholds,
                    curve.pfa,
                    curve.pmd,
                    curve.pfa_stderr,
                    curve.pmd_stderr,
                )
            ),
        )
        outputs.append(name)
        detector_files[detector] = name

    n = config.model.num_nodes
    points = config.scenario["theory_threshold_points"]
    pfa_grid = np.logspace(np.log10(5e-4), np.log10(0.99), points)
    thresholds = np.array([quantile_h0(1.0 - pfa, n) for pfa in pfa_grid])
    psis = theory_psi_draws(scenario, config.scenario["theory_channel_draws"], seed=seed)
    pmd_rows = []
    for threshold in thresholds:
        pmd = float(np.mean([cdf_h1(float(threshold), psi) for psi in psis]))
        pmd_rows.append([threshold, 1.0 - float(cdf_h0(float(threshold), n)), pmd])
    _write_csv(out_dir / "croc_theory.csv", ["threshold", "pfa", "pmd"], pmd_rows)
    outputs.append("croc_theory.csv")

    if config.plots:
        outputs.append(_plot_croc(out_dir, detector_files))
    return result.excluded, outputs


def cmd_pmd_vs_snr(config: RunConfig, out_dir: Path, seed: int, jobs: int) -> tuple[int, list[str]]:
    """Miss probability against SNR at a fixed false-alarm target."""
    pfa_target = config.scenario["pfa_target"]
    n = config.model.num_nodes
    num_windows = config.model.num_windows
    rows: list[list[Any]] = []
    excluded = 0
    theory_threshold = quantile_h0(1.0 - pfa_target, n)
    for snr_db in config.scenario["snr_grid_db"]:
        scenario = _build_scenario(config, snr_db=snr_db)
        result = run_monte_carlo(scenario, seed=seed, jobs=jobs)
        excluded += result.excluded
        trials = len(result.h1)
        for detector in scenario.detectors:
            h0 = statistic_values(result.h0, detector)
            h1 = statistic_values(result.h1, detector)
            pmd, _ = pmd_at_pfa(h0, h1, pfa_target)
            rows.append(
                [snr_db, detector, pmd, _binomial_stderr(pmd, trials), "empirical"]
            )
        # The asymptotic null law also provides thresholds for the two
        # likelihood-ratio statistics, on the doubled-log scale.
        if "glrt" in scenario.detectors:
            scaled = num_windows * statistic_values(result.h1, "glrt")
            pmd = float(np.mean(scaled <= theory_threshold))
            rows.append([snr_db, "glrt", pmd, _binomial_stderr(pmd, trials), "theory"])
        if "lmp" in scenario.detectors:
            scaled = 2.0 * statistic_values(result.h1, "lmp")
            pmd = float(np.mean(scaled <= theory_threshold))
            rows.append([snr_db, "lmp", pmd, _binomial_stderr(pmd, trials), "theory"])
        psis = theory_psi_draws(
            scenario, config.scenario["theory_channel_draws"], seed=seed
        )
        predicted = np.array([cdf_h1(theory_threshold, psi) for psi in psis])
        rows.append(
            [
                snr_db,
                "glrt_lmp_th",
                float(predicted.mean()),
                float(predicted.std() / np.sqrt(predicted.size)),
                "theory",
            ]
        )
    _write_csv(
        out_dir / "pmd_vs_snr.csv",
        ["snr_db", "detector", "pmd", "pmd_stderr", "threshold_source"],
        rows,
    )
    outputs = ["pmd_vs_snr.csv"]
    if config.plots:
        outputs.append(
            _plot_rows(out_dir, "pmd_vs_snr.csv", "pmd_vs_snr.svg", "snr_db", "pmd")
        )
    return excluded, outputs


def _ks_and_grid_dev(
    values: np.ndarray, law_cdf, grid: np.ndarray
) -> tuple[float, float]:
    """One-sample KS distance and max CDF deviation on a fixed grid."""
    ordered = np.sort(values)
    n = ordered.size
    law_at_points = law_cdf(ordered)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    ks = float(
        max(np.max(np.abs(upper - law_at_points)), np.max(np.abs(lower - law_at_points)))
    )
    empirical_on_grid = np.searchsorted(ordered, grid, side="right") / n
    grid_dev = float(np.max(np.abs(empirical_on_grid - law_cdf(grid))))
    return ks, grid_dev


def cmd_theory_check(config: RunConfig, out_dir: Path, seed: int, jobs: int) -> tuple[int, list[str]]:
    """Empirical statistic laws under the Gaussian approximation vs theory.

    Samples windows directly from the Gaussian energy model so the comparison
    isolates the asymptotic (large ``L``) laws from the finite-window CLT
    error.  When ``theory_check.theta`` is nonzero the alternative law is
    evaluated through a dense monotone interpolation of its inversion.
    """
    del jobs  # sampling here is cheap; trials run in-process
    tck = config.theory_check
    n = tck["num_nodes"]
    m = tck["samples_per_window"]
    num_windows = tck["windows_per_node"]
    runs = tck["runs"]
    theta = np.zeros(n) if tck["theta"] is None else np.asarray(tck["theta"], dtype=float)

    doubled_glrt = np.empty(runs)
    doubled_lmp = np.empty(runs)
    kept = 0
    excluded = 0
    for run in range(runs):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, 2)))
        data = sample_gaussian_approx(theta, m, num_windows, rng)
        fit = global_mle(data, m)
        if not fit.converged:
            excluded += 1
            continue
        doubled_glrt[kept] = num_windows * glrt_statistic(data, m, fit.theta)
        doubled_lmp[kept] = 2.0 * lmp_statistic(data, m)[0]
        kept += 1
    doubled_glrt = doubled_glrt[:kept]
    doubled_lmp = doubled_lmp[:kept]

    top = max(doubled_glrt.max(), doubled_lmp.max(), quantile_h0(0.999, n))
    grid = np.linspace(0.0, top, 101)
    if np.all(theta == 0):
        law = lambda t: np.asarray(cdf_h0(t, n))
    else:
        psi = psi_from_theta(theta, num_windows, m)
        dense = np.linspace(0.0, top * 1.02 + 1.0, 257)
        dense_cdf = np.array([cdf_h1(float(t), psi) for t in dense])
        from scipy.interpolate import PchipInterpolator

        interpolator = PchipInterpolator(dense, dense_cdf)
        law = lambda t: np.clip(interpolator(np.maximum(t, 0.0)), 0.0, 1.0)

    ks_glrt, dev_glrt = _ks_and_grid_dev(doubled_glrt, law, grid)
    ks_lmp, dev_lmp = _ks_and_grid_dev(doubled_lmp, law, grid)
    # Two-sample comparison of the statistics with each other.
    pooled = np.sort(np.concatenate([doubled_glrt, doubled_lmp]))
    cdf_glrt = np.searchsorted(np.sort(doubled_glrt), pooled, side="right") / kept
    cdf_lmp = np.searchsorted(np.sort(doubled_lmp), pooled, side="right") / kept
    ks_pair = float(np.max(np.abs(cdf_glrt - cdf_lmp)))
    grid_glrt = np.searchsorted(np.sort(doubled_glrt), grid, side="right") / kept
    grid_lmp = np.searchsorted(np.sort(doubled_lmp), grid, side="right") / kept
    dev_pair = float(np.max(np.abs(grid_glrt - grid_lmp)))

    _write_csv(
        out_dir / "theory_check.csv",
        ["statistic", "ks_distance", "max_grid_abs_dev"],
        [
            ["glrt", ks_glrt, dev_glrt],
            ["lmp", ks_lmp, dev_lmp],
            ["glrt_vs_lmp", ks_pair, dev_pair],
        ],
    )
    return excluded, ["theory_check.csv"]


def cmd_netsim(config: RunConfig, out_dir: Path, seed: int, jobs: int) -> tuple[int, list[str]]:
    """One detection instance under each cooperation strategy."""
    del jobs  # a single instance runs in-process
    scenario = _build_scenario(config)
    model = config.model
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    topology = sample_topology(model.num_nodes, config.channel, rng)
    channel = sample_channel(topology, config.channel, rng)
    if scenario.snr_db is None:
        energy = model.symbol_energy
    else:
        energy = 10.0 ** (scenario.snr_db / 10.0) * model.noise_power / channel.sigma2.mean()
    config_with_energy = replace(model, symbol_energy=float(energy))
    data = simulate_energy(channel, config_with_energy, Hypothesis.H1, rng)
    graph = build_comm_graph(topology, config.comm_radius)

    lmp_total, lmp_locals = lmp_statistic(data, model.samples_per_window)
    fit = global_mle(data, model.samples_per_window)
    if not fit.converged:
        raise RuntimeError(
            f"joint MLE did not converge (KKT residual {fit.kkt_residual:.3e})"
        )
    central_glrt = glrt_statistic(data, model.samples_per_window, fit.theta)

    mac_fused, mac_ledger = run_mac(lmp_locals, config.mac_noise_std, rng)
    pac_fused, pac_ledger = run_pac(lmp_locals)
    consensus_fused, consensus_ledger, beta = run_consensus(
        lmp_locals, graph, config.consensus
    )
    flood_fused, flood_ledger = run_flooding_glrt(data, graph)
    records = model.num_nodes * model.num_windows

    rows = [
        [
            mac_ledger.strategy.value,
            mac_ledger.transmissions,
            mac_ledger.channel_uses,
            None,
            mac_fused - lmp_total,
        ],
        [
            pac_ledger.strategy.value,
            pac_ledger.transmissions,
            pac_ledger.channel_uses,
            None,
            pac_fused - lmp_total,
        ],
        [
            consensus_ledger.strategy.value,
            consensus_ledger.transmissions,
            consensus_ledger.channel_uses,
            beta,
            consensus_fused - lmp_total,
        ],
        [
            flood_ledger.strategy.value,
            flood_ledger.transmissions,
            flood_ledger.channel_uses,
            flood_ledger.transmissions / records,
            flood_fused - central_glrt,
        ],
    ]
    _write_csv(
        out_dir / "resources.csv",
        ["strategy", "transmissions", "channel_uses", "beta_or_nf", "fused_minus_centralized"],
        rows,
    )
    return 0, ["resources.csv"]


def cmd_deflection(config: RunConfig, out_dir: Path, seed: int, jobs: int) -> tuple[int, list[str]]:
    """Deflection coefficients over the SNR grid."""
    rows: list[list[Any]] = []
    excluded = 0
    for snr_db in config.scenario["deflection_snr_grid_db"]:
        scenario = _build_scenario(config, snr_db=snr_db)
        result = run_monte_carlo(scenario, seed=seed, jobs=jobs)
        excluded += result.excluded
        coefficients = {
            detector: deflection(
                statistic_values(result.h0, detector),
                statistic_values(result.h1, detector),
            )
            for detector in scenario.detectors
        }
        rel_diff = None
        if "glrt" in coefficients and "lmp" in coefficients and coefficients["glrt"] != 0:
            # The L-MP statistic is compared on the GLRT's (2/L) log scale;
            # deflection is scale-invariant, so raw values compare directly.
            rel_diff = (coefficients["glrt"] - coefficients["lmp"]) / coefficients["glrt"]
        for detector in scenario.detectors:
            rows.append([snr_db, detector, coefficients[detector], rel_diff])
    _write_csv(
        out_dir / "deflection.csv",
        ["snr_db", "detector", "D", "rel_diff_glrt_lmp"],
        rows,
    )
    outputs = ["deflection.csv"]
    if config.plots:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        figure, axes = plt.subplots(figsize=(6.0, 4.5))
        detectors = sorted({row[1] for row in rows})
        for detector in detectors:
            chosen = [(row[0], row[2]) for row in rows if row[1] == detector]
            axes.plot(*zip(*chosen), marker="o", markersize=3, label=detector)
        axes.set_xlabel("snr_db")
        axes.set_ylabel("deflection coefficient")
        axes.grid(True, alpha=0.3)
        axes.legend(fontsize=8)
        figure.tight_layout()
        figure.savefig(out_dir / "deflection.svg")
        plt.close(figure)
        outputs.append("deflection.svg")
    return excluded, outputs


_COMMANDS = {
    "croc": cmd_croc,
    "pmd-vs-snr": cmd_pmd_vs_snr,
    "theory-check": cmd_theory_check,
    "netsim": cmd_netsim,
    "deflection": cmd_deflection,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsn-detect",
        description="Distributed-detection experiments for energy-measuring sensor networks",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        sub = subparsers.add_parser(name, help=func.__doc__.splitlines()[0])
        sub.add_argument("--config", required=True, help="path to the JSON run configuration")
        sub.add_argument("--out", required=True, help="output directory for CSV results")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument(
            "--jobs",
            type=int,
            default=os.cpu_count() or 1,
            help="worker processes for Monte Carlo trials",
        )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    started = _utc_now()
    try:
        config = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        seed = config.seed if args.seed is None else args.seed
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        excluded, outputs = _COMMANDS[args.command](config, out_dir, seed, args.jobs)
        _write_manifest(out_dir, args.command, config, seed, started, excluded, outputs)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
