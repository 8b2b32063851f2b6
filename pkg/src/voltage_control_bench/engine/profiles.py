from dataclasses import dataclass
import abc
import logging
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class ProfileShape(abc.ABC):
    @abc.abstractmethod
    def generate_profile(self, hours: np.ndarray, rng: np.random.Generator, *args: Any) -> np.ndarray:
        """Return one value per entry of `hours` (time of day in hours, may span several days)."""


@dataclass
class SolarBell(ProfileShape):
    peak: float
    sunrise: float = 6.0
    sunset: float = 19.0

    def generate_profile(self, hours: np.ndarray, rng: np.random.Generator, *args: Any) -> np.ndarray:
        logger.debug(f"Generating solar bell with peak {self.peak} between {self.sunrise}h and {self.sunset}h")
        tod = np.mod(hours, 24.0)
        phase = (tod - self.sunrise) / (self.sunset - self.sunrise)
        bell = np.where((phase > 0) & (phase < 1), np.sin(np.pi * np.clip(phase, 0, 1)) ** 2, 0.0)
        return self.peak * bell


@dataclass
class TwoPeakLoad(ProfileShape):
    base: float
    peak: float
    morning: float = 8.0
    evening: float = 19.0
    width: float = 2.0

    def generate_profile(self, hours: np.ndarray, rng: np.random.Generator, *args: Any) -> np.ndarray:
        logger.debug(f"Generating two-peak load with base {self.base} and peak {self.peak}")
        tod = np.mod(hours, 24.0)
        morning = np.exp(-0.5 * ((tod - self.morning) / self.width) ** 2)
        evening = np.exp(-0.5 * ((tod - self.evening) / self.width) ** 2)
        return self.base + (self.peak - self.base) * np.maximum(0.7 * morning, evening)


@dataclass
class MultiplicativeNoise(ProfileShape):
    std: float

    def generate_profile(self, hours: np.ndarray, rng: np.random.Generator, *args: Any) -> np.ndarray:
        return np.clip(1.0 + rng.normal(0.0, self.std, size=len(hours)), 0.0, None)


@dataclass
class DailyScale(ProfileShape):
    """Day-to-day cloudiness: one factor in [1 - depth, 1] per calendar day."""

    depth: float
    steps_per_day: int = 480

    def generate_profile(self, hours: np.ndarray, rng: np.random.Generator, *args: Any) -> np.ndarray:
        n_days = -(-len(hours) // self.steps_per_day)
        factors = 1.0 - self.depth * rng.uniform(0.0, 1.0, size=n_days)
        return np.repeat(factors, self.steps_per_day)[: len(hours)]


PROFILE_CLASSES = {
    "solar_bell": SolarBell,
    "two_peak_load": TwoPeakLoad,
    "multiplicative_noise": MultiplicativeNoise,
    "daily_scale": DailyScale,
}
