"""Signal model: sensor geometry, fading channels, and per-window energy data.

A stochastic source is observed by a network of energy-measuring sensors.
Each sensor reports, per observation window, the normalized energy of
``samples_per_window`` complex baseband samples.  Under the signal-present
hypothesis all sensors see the same source waveform through independent
fading gains, which makes the energies spatially dependent.  For large
windows the energy vector is well approximated by a Gaussian whose moments
are returned by :func:`gaussian_moments`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "SourceKind",
    "Hypothesis",
    "ModelConfig",
    "ChannelConfig",
    "Topology",
    "ChannelRealization",
    "EnergyMatrix",
    "GaussianMoments",
    "sample_topology",
    "sample_channel",
    "theta_from_channel",
    "simulate_energy",
    "gaussian_moments",
    "sample_gaussian_approx",
]

# Windows are simulated in blocks so peak memory stays bounded for large L.
_MAX_BLOCK_SCALARS = 4_000_000

_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])


class SourceKind(str, Enum):
    """Distribution of the source symbols."""

    GAUSSIAN = "gaussian"
    QAM16 = "qam16"


class Hypothesis(Enum):
    """Signal absent (H0) or present (H1)."""

    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class ModelConfig:
    """Static parameters of the sensing front end.

    Parameters
    ----------
    num_nodes : int
        Number of sensors.
    samples_per_window : int
        Complex baseband samples accumulated per energy measurement.
    num_windows : int
        Energy measurements reported by each sensor.
    noise_power : float
        Per-sample complex noise variance (linear scale), known to the nodes.
    symbol_energy : float or None
        Mean source symbol energy.  ``None`` when the experiment derives it
        from a target SNR per channel draw.
    source_kind : SourceKind
        Source symbol distribution.
    seed : int
        Master seed for reproducible experiment streams.
    """

    num_nodes: int
    samples_per_window: int
    num_windows: int
    noise_power: float
    symbol_energy: float | None = None
    source_kind: SourceKind = SourceKind.GAUSSIAN
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_nodes < 1 or self.samples_per_window < 1 or self.num_windows < 1:
            raise ValueError("num_nodes, samples_per_window and num_windows must be >= 1")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.symbol_energy is not None and self.symbol_energy <= 0:
            raise ValueError("symbol_energy must be positive when given")


@dataclass(frozen=True)
class ChannelConfig:
    """Path-loss / log-normal-shadowing channel parameters.

    The mean channel power at distance ``d`` from the source is
    ``intercept_db - 10 * pathloss_exponent * log10(d / reference_distance)``
    dB, perturbed by zero-mean Gaussian shadowing of ``shadowing_std_db`` dB.
    """

    intercept_db: float = -37.0
    pathloss_exponent: float = 4.0
    reference_distance: float = 10.0
    shadowing_std_db: float = 3.0
    area_side: float = 1600.0
    source_position: tuple[float, float] = (0.0, 1000.0)

    def __post_init__(self) -> None:
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss_exponent must be positive")
        if self.reference_distance <= 0:
            raise ValueError("reference_distance must be positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be nonnegative")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")


@dataclass(frozen=True)
class Topology:
    """Sensor positions plus their distances to the source."""

    positions: np.ndarray  # (N, 2) meters
    source_position: np.ndarray  # (2,) meters
    distances: np.ndarray  # (N,) meters, all > 0


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the channel: per-node variances and complex gains."""

    sigma2: np.ndarray  # (N,) mean channel powers, linear scale
    gains: np.ndarray  # (N,) complex gains, gains[n] ~ CN(0, sigma2[n])


@dataclass(frozen=True)
class EnergyMatrix:
    """Normalized energy measurements, one row per node, one column per window."""

    values: np.ndarray  # (N, L) real
    samples_per_window: int

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_windows(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector and covariance of the large-window energy approximation."""

    mean: np.ndarray  # (N,)
    cov: np.ndarray  # (N, N)


def sample_topology(n: int, channel: ChannelConfig, rng: np.random.Generator) -> Topology:
    """Place ``n`` sensors uniformly in the square deployment region.

    The square has side ``channel.area_side`` and is centered at the origin.
    A node landing exactly on the source (probability zero, but possible with
    degenerate generators) is redrawn so all distances are strictly positive.
    """
    source = np.asarray(channel.source_position, dtype=float)
    half = channel.area_side / 2.0
    positions = rng.uniform(-half, half, size=(n, 2))
    distances = np.linalg.norm(positions - source, axis=1)
    while np.any(distances == 0.0):
        bad = distances == 0.0
        positions[bad] = rng.uniform(-half, half, size=(int(bad.sum()), 2))
        distances = np.linalg.norm(positions - source, axis=1)
    return Topology(positions=positions, source_position=source, distances=distances)


def sample_channel(
    topology: Topology, channel: ChannelConfig, rng: np.random.Generator
) -> ChannelRealization:
    """Draw per-node channel variances and Rayleigh-fading complex gains."""
    shadowing = rng.normal(0.0, channel.shadowing_std_db, size=topology.distances.shape)
    sigma2_db = (
        channel.intercept_db
        - 10.0 * channel.pathloss_exponent * np.log10(topology.distances / channel.reference_distance)
        - shadowing
    )
    sigma2 = 10.0 ** (sigma2_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)
    gains = scale * (rng.standard_normal(sigma2.shape) + 1j * rng.standard_normal(sigma2.shape))
    return ChannelRealization(sigma2=sigma2, gains=gains)


def theta_from_channel(
    channel: ChannelRealization, symbol_energy: float, noise_power: float
) -> np.ndarray:
    """Per-node signal-to-noise parameters ``symbol_energy * |gain|^2 / noise_power``."""
    if symbol_energy <= 0 or noise_power <= 0:
        raise ValueError("symbol_energy and noise_power must be positive")
    return symbol_energy * np.abs(channel.gains) ** 2 / noise_power


def _source_block(
    kind: SourceKind, symbol_energy: float, shape: tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    """Draw source symbols with mean energy ``symbol_energy``."""
    if kind is SourceKind.GAUSSIAN:
        scale = np.sqrt(symbol_energy / 2.0)
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    # 16-QAM on the {-3,-1,1,3}^2 grid has mean energy 10 before scaling.
    re = rng.choice(_QAM16_LEVELS, size=shape)
    im = rng.choice(_QAM16_LEVELS, size=shape)
    return np.sqrt(symbol_energy / 10.0) * (re + 1j * im)


def simulate_energy(
    channel: ChannelRealization,
    config: ModelConfig,
    hypothesis: Hypothesis,
    rng: np.random.Generator,
) -> EnergyMatrix:
    """Simulate normalized energies at the waveform level.

    Per window, every node receives the same source symbol block through its
    own constant gain plus independent complex white noise, and reports

    ``z = (sum_i |y_i|^2 - m * noise_power) / (sqrt(m) * noise_power)``

    where ``m = config.samples_per_window``.  Under ``Hypothesis.H0`` no
    source symbols are drawn, so the output is invariant to ``source_kind``.

    Returns
    -------
    EnergyMatrix
        Shape ``(num_nodes, num_windows)``.
    """
    n = config.num_nodes
    m = config.samples_per_window
    total = config.num_windows
    noise = config.noise_power
    if hypothesis is Hypothesis.H1 and config.symbol_energy is None:
        raise ValueError("symbol_energy is required to simulate the signal-present hypothesis")

    out = np.empty((n, total))
    block = max(1, _MAX_BLOCK_SCALARS // (n * m))
    start = 0
    noise_scale = np.sqrt(noise / 2.0)
    while start < total:
        width = min(block, total - start)
        v = noise_scale * (
            rng.standard_normal((n, width, m)) + 1j * rng.standard_normal((n, width, m))
        )
        if hypothesis is Hypothesis.H1:
            s = _source_block(config.source_kind, config.symbol_energy, (width, m), rng)
            y = channel.gains[:, None, None] * s[None, :, :] + v
        else:
            y = v
        energy = np.sum(np.abs(y) ** 2, axis=2)
        out[:, start : start + width] = (energy - m * noise) / (np.sqrt(m) * noise)
        start += width
    return EnergyMatrix(values=out, samples_per_window=m)


def gaussian_moments(theta: np.ndarray, m: int) -> GaussianMoments:
    """Large-window Gaussian moments of the energy vector at parameter ``theta``.

    The mean is ``sqrt(m) * theta`` and the covariance is
    ``theta theta^T + 2 diag(theta) + I``, positive definite for any
    ``theta >= 0``.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be nonnegative")
    mean = np.sqrt(m) * theta
    cov = np.outer(theta, theta) + 2.0 * np.diag(theta) + np.eye(theta.size)
    return GaussianMoments(mean=mean, cov=cov)


def sample_gaussian_approx(
    theta: np.ndarray, m: int, num_windows: int, rng: np.random.Generator
) -> EnergyMatrix:
    """Draw i.i.d. windows directly from the Gaussian energy approximation."""
    moments = gaussian_moments(theta, m)
    try:
        factor = np.linalg.cholesky(moments.cov)
    except np.linalg.LinAlgError as exc:  # unreachable for theta >= 0
        raise RuntimeError("energy covariance is not positive definite") from exc
    white = rng.standard_normal((num_windows, theta.size))
    values = (moments.mean + white @ factor.T).T
    return EnergyMatrix(values=values, samples_per_window=m)
