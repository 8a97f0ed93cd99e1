"""Core schema definitions shared across the backend services."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigurationError, DomainError

LIGHTSPEED_MPS = 299_792_458.0
POSITION_TOLERANCE = 1e-12
UNIT_MODULUS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SystemConfig:
  """Waveform, noise and carrier constants of the OFDM ISAC link (SI units)."""

  carrier_frequency: float = 28e9
  num_subcarriers: int = 32
  num_blocks: int = 7
  subcarrier_spacing: float = 120e3
  symbol_duration: float = 8.92e-6
  comm_noise_psd: float = 1e-23
  radar_noise_psd: float = 1.1e-25
  total_power: float = 1.0
  radar_cross_section: float = 0.1
  ref_path_loss: float = 1e-7
  ref_distance: float = 1.0
  path_loss_exponent: float = 2.55
  lightspeed: float = LIGHTSPEED_MPS

  def __post_init__(self) -> None:
    positive = {
      "carrier_frequency": self.carrier_frequency,
      "subcarrier_spacing": self.subcarrier_spacing,
      "symbol_duration": self.symbol_duration,
      "comm_noise_psd": self.comm_noise_psd,
      "radar_noise_psd": self.radar_noise_psd,
      "total_power": self.total_power,
      "radar_cross_section": self.radar_cross_section,
      "ref_path_loss": self.ref_path_loss,
      "ref_distance": self.ref_distance,
      "lightspeed": self.lightspeed,
    }
    for name, value in positive.items():
      if not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name} must be strictly positive, got {value}.", field=name)
    if self.num_subcarriers < 1 or self.num_blocks < 1:
      raise ConfigurationError("num_subcarriers and num_blocks must be at least 1.")
    if self.path_loss_exponent < 0:
      raise ConfigurationError("path_loss_exponent cannot be negative.", field="path_loss_exponent")
    if self.cyclic_prefix <= 0:
      raise ConfigurationError(
        "symbol_duration must exceed the useful duration 1/subcarrier_spacing "
        f"({self.useful_duration:.6g} s).",
        field="symbol_duration"
      )

  @property
  def wavelength(self) -> float:
    return self.lightspeed / self.carrier_frequency

  @property
  def useful_duration(self) -> float:
    """T_e = 1/Δf."""
    return 1.0 / self.subcarrier_spacing

  @property
  def cyclic_prefix(self) -> float:
    return self.symbol_duration - self.useful_duration


@dataclass(eq=False)
class ArrayLayout:
  """Transmit/receive antenna position vectors with their feasible regions.

  `checked=False` keeps only the box constraints; swarm particles use it to
  price spacing violations instead of rejecting them.
  """

  tx_positions: np.ndarray
  rx_positions: np.ndarray
  tx_bounds: Tuple[float, float]
  rx_bounds: Tuple[float, float]
  min_spacing: float
  tx_rx_gap: float
  checked: bool = field(default=True, repr=False)

  def __post_init__(self) -> None:
    self.tx_positions = np.asarray(self.tx_positions, dtype=float).reshape(-1)
    self.rx_positions = np.asarray(self.rx_positions, dtype=float).reshape(-1)
    self.tx_bounds = (float(self.tx_bounds[0]), float(self.tx_bounds[1]))
    self.rx_bounds = (float(self.rx_bounds[0]), float(self.rx_bounds[1]))
    if self.tx_positions.size == 0 or self.rx_positions.size == 0:
      raise ConfigurationError("Both arrays need at least one antenna.")
    if not (np.all(np.isfinite(self.tx_positions)) and np.all(np.isfinite(self.rx_positions))):
      raise DomainError("Antenna positions must be finite.")
    if self.min_spacing <= 0:
      raise ConfigurationError("min_spacing must be positive.", field="min_spacing")
    if self.tx_rx_gap < 0:
      raise ConfigurationError("tx_rx_gap cannot be negative.", field="tx_rx_gap")
    for name, (low, high), count in (
      ("tx", self.tx_bounds, self.num_tx),
      ("rx", self.rx_bounds, self.num_rx),
    ):
      if high - low < (count - 1) * self.min_spacing - POSITION_TOLERANCE:
        raise ConfigurationError(
          f"The {name} region [{low:.6g}, {high:.6g}] m cannot host {count} antennas "
          f"spaced by {self.min_spacing:.6g} m.",
          field=f"{name}_bounds"
        )
    if self.rx_bounds[0] - self.tx_bounds[1] < self.tx_rx_gap - POSITION_TOLERANCE:
      raise ConfigurationError("Receive region must start tx_rx_gap after the transmit region.")
    self._check_box(self.tx_positions, self.tx_bounds, "tx")
    self._check_box(self.rx_positions, self.rx_bounds, "rx")
    if self.checked:
      self._check_spacing(self.tx_positions, "tx")
      self._check_spacing(self.rx_positions, "rx")

  # ------------------------------------------------------------------
  @classmethod
  def half_wavelength(
    cls,
    wavelength: float,
    num_tx: int,
    num_rx: int,
    region_length: float,
    *,
    min_spacing: float | None = None,
    tx_rx_gap: float | None = None
  ) -> "ArrayLayout":
    """ULA with λ/2 spacing anchored at the lower end of each region."""
    spacing = wavelength / 2 if min_spacing is None else min_spacing
    gap = wavelength / 2 if tx_rx_gap is None else tx_rx_gap
    tx_bounds = (0.0, region_length)
    rx_low = region_length + gap
    rx_bounds = (rx_low, rx_low + region_length)
    half = wavelength / 2
    return cls(
      tx_positions=np.arange(num_tx) * half,
      rx_positions=rx_low + np.arange(num_rx) * half,
      tx_bounds=tx_bounds,
      rx_bounds=rx_bounds,
      min_spacing=spacing,
      tx_rx_gap=gap,
    )

  @property
  def num_tx(self) -> int:
    return int(self.tx_positions.size)

  @property
  def num_rx(self) -> int:
    return int(self.rx_positions.size)

  def with_tx(self, positions: Sequence[float], *, checked: bool = True) -> "ArrayLayout":
    return replace(self, tx_positions=np.array(positions, dtype=float), checked=checked)

  def with_rx(self, positions: Sequence[float], *, checked: bool = True) -> "ArrayLayout":
    return replace(self, rx_positions=np.array(positions, dtype=float), checked=checked)

  def tx_spacing_violations(self) -> int:
    """Number of transmit antenna pairs closer than min_spacing."""
    return spacing_violations(self.tx_positions, self.min_spacing)

  def _check_box(self, positions: np.ndarray, bounds: Tuple[float, float], name: str) -> None:
    low, high = bounds
    if np.any(positions < low - POSITION_TOLERANCE) or np.any(positions > high + POSITION_TOLERANCE):
      raise ConfigurationError(f"{name} positions leave the region [{low:.6g}, {high:.6g}] m.")

  def _check_spacing(self, positions: np.ndarray, name: str) -> None:
    gaps = np.diff(positions)
    if np.any(gaps < self.min_spacing - POSITION_TOLERANCE):
      raise ConfigurationError(
        f"{name} positions must be increasing with spacing >= {self.min_spacing:.6g} m."
      )


def spacing_violations(positions: Sequence[float], min_spacing: float) -> int:
  values = np.asarray(positions, dtype=float)
  distances = np.abs(values[:, None] - values[None, :])
  upper = np.triu_indices(values.size, k=1)
  return int(np.count_nonzero(distances[upper] < min_spacing - POSITION_TOLERANCE))


@dataclass(frozen=True)
class VehicleState:
  """Motion triple ζ_k = (θ, d, ν) in radians, metres and m/s."""

  theta: float
  distance: float
  speed: float

  def __post_init__(self) -> None:
    if not math.isfinite(self.theta) or not 0.0 < self.theta < math.pi:
      raise DomainError(f"theta must lie in (0, pi) rad, got {self.theta}.")
    if not math.isfinite(self.distance) or self.distance <= 0:
      raise DomainError(f"distance must be positive, got {self.distance}.")
    if not math.isfinite(self.speed):
      raise DomainError("speed must be finite.")

  @classmethod
  def from_degrees(cls, theta_deg: float, distance: float, speed: float) -> "VehicleState":
    return cls(theta=math.radians(theta_deg), distance=distance, speed=speed)

  def as_array(self) -> np.ndarray:
    return np.array([self.theta, self.distance, self.speed], dtype=float)


def vehicles_from_array(states: np.ndarray) -> List[VehicleState]:
  """Rows of a (K, 3) array → VehicleState list."""
  rows = np.asarray(states, dtype=float).reshape(-1, 3)
  return [VehicleState(float(theta), float(distance), float(speed)) for theta, distance, speed in rows]


def vehicles_to_array(vehicles: Sequence[VehicleState]) -> np.ndarray:
  return np.array([vehicle.as_array() for vehicle in vehicles], dtype=float).reshape(-1, 3)


@dataclass(eq=False)
class BeamformerSet:
  """Per-subcarrier unit-modulus beams, powers and the subcarrier→vehicle map."""

  beams: np.ndarray
  powers: np.ndarray
  assignment: np.ndarray

  def __post_init__(self) -> None:
    self.beams = np.atleast_2d(np.asarray(self.beams, dtype=complex))
    self.powers = np.asarray(self.powers, dtype=float).reshape(-1)
    self.assignment = np.asarray(self.assignment, dtype=int).reshape(-1)
    num_subcarriers = self.beams.shape[0]
    if self.powers.size != num_subcarriers or self.assignment.size != num_subcarriers:
      raise ConfigurationError("beams, powers and assignment must all have one entry per subcarrier.")
    if np.any(np.abs(np.abs(self.beams) - 1.0) > UNIT_MODULUS_TOLERANCE):
      raise DomainError("Beam entries must be unit modulus.")
    if np.any(self.powers < -1e-12):
      raise DomainError("Subcarrier powers cannot be negative.")
    self.powers = np.clip(self.powers, 0.0, None)
    if np.any(self.assignment < 0):
      raise ConfigurationError("Subcarrier assignment must use vehicle indices >= 0.")

  @property
  def num_subcarriers(self) -> int:
    return int(self.beams.shape[0])

  @property
  def num_tx(self) -> int:
    return int(self.beams.shape[1])

  def subcarriers(self, vehicle_index: int) -> np.ndarray:
    return np.flatnonzero(self.assignment == vehicle_index)

  def with_beams(self, beams: np.ndarray) -> "BeamformerSet":
    return replace(self, beams=np.array(beams, dtype=complex))

  def with_powers(self, powers: np.ndarray) -> "BeamformerSet":
    return replace(self, powers=np.array(powers, dtype=float))

  def check_budget(self, total_power: float) -> None:
    if self.powers.sum() > total_power + 1e-9:
      raise DomainError(
        f"Power allocation uses {self.powers.sum():.6g} W above the budget {total_power:.6g} W."
      )


@dataclass(eq=False)
class EchoMeasurement:
  """Post-matched-filter echo samples indexed (subcarrier, block, rx antenna)."""

  samples: np.ndarray
  noise_variance: np.ndarray

  def __post_init__(self) -> None:
    self.samples = np.asarray(self.samples, dtype=complex)
    self.noise_variance = np.asarray(self.noise_variance, dtype=float).reshape(-1)
    if self.samples.ndim != 3 or self.samples.shape[0] != self.noise_variance.size:
      raise ConfigurationError("Echo samples must be shaped (N, Q, M_rx) with one variance per subcarrier.")
    if np.any(self.noise_variance < 0):
      raise DomainError("Noise variances cannot be negative.")

  @property
  def stacked(self) -> np.ndarray:
    """ỹ as a single vector, subcarrier-major."""
    return self.samples.reshape(-1)

  @property
  def element_weights(self) -> np.ndarray:
    """Diagonal of Σ^{-1} aligned with `stacked`; zero-power subcarriers weigh 0."""
    per_subcarrier = np.zeros_like(self.noise_variance)
    active = self.noise_variance > 0
    per_subcarrier[active] = 1.0 / self.noise_variance[active]
    block = self.samples.shape[1] * self.samples.shape[2]
    return np.repeat(per_subcarrier, block)


def contiguous_partition(num_subcarriers: int, num_vehicles: int) -> np.ndarray:
  """Consecutive, near-equal groups of subcarriers per vehicle (vehicle index per subcarrier)."""
  if num_vehicles < 1 or num_subcarriers < num_vehicles:
    raise ConfigurationError(
      f"Cannot split {num_subcarriers} subcarriers among {num_vehicles} vehicles."
    )
  groups = np.array_split(np.arange(num_subcarriers), num_vehicles)
  assignment = np.empty(num_subcarriers, dtype=int)
  for index, group in enumerate(groups):
    assignment[group] = index
  return assignment
