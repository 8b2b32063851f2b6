import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from voltage_control_bench.config import SynthConfig
from voltage_control_bench.engine import profiles
from voltage_control_bench.grid.grid_model import NetworkModel
from voltage_control_bench.grid.power_flow import InjectionProfile, PowerFlowError, SolverOptions, solve

logger = logging.getLogger(__name__)

EVAL_EPISODE_STEPS = 480
TIMESTAMP_COLUMN = "timestamp"


class DatasetError(ValueError):
    pass


class MissingColumn(DatasetError):
    pass


class NonFiniteValue(DatasetError):
    pass


class DatasetTooShort(DatasetError):
    pass


class SynthesisError(DatasetError):
    pass


@dataclass
class TimeSeriesDataset:
    """
    Exogenous load and PV series in p.u., one row per step.

    load_p and load_q are (T, n_loads) in network.loads order, pv_p is (T, n_pvs) in network.pvs order.
    """

    step_minutes: int
    timestamps: pd.DatetimeIndex
    load_p: np.ndarray
    load_q: np.ndarray
    pv_p: np.ndarray
    load_columns: List[str]
    pv_columns: List[str]
    day: np.ndarray = field(init=False, repr=False)
    minute_of_day: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        first_midnight = self.timestamps[0].normalize()
        self.day = np.asarray((self.timestamps.normalize() - first_midnight).days, dtype=int)
        self.minute_of_day = np.asarray(self.timestamps.hour * 60 + self.timestamps.minute, dtype=int)

    def __len__(self) -> int:
        return len(self.timestamps)

    def day_starts(self) -> np.ndarray:
        return np.flatnonzero(self.minute_of_day == 0)

    def to_frame(self) -> pd.DataFrame:
        columns = {TIMESTAMP_COLUMN: self.timestamps.strftime("%Y-%m-%d %H:%M:%S")}
        for k, name in enumerate(self.load_columns):
            columns[f"{name}_p"] = self.load_p[:, k]
            columns[f"{name}_q"] = self.load_q[:, k]
        for k, name in enumerate(self.pv_columns):
            columns[f"{name}_p"] = self.pv_p[:, k]
        return pd.DataFrame(columns)


def _require_columns(frame: pd.DataFrame, columns: List[str], path: str) -> None:
    missing = [col for col in columns if col not in frame.columns]
    if missing:
        raise MissingColumn(f"Dataset {path} is missing columns {missing}")


def load_dataset(path: str, network: NetworkModel, min_rows: int = EVAL_EPISODE_STEPS + 1) -> TimeSeriesDataset:
    """Read a dataset CSV and check it against the loads and PVs declared in the network file."""
    frame = pd.read_csv(path, index_col=None)
    load_columns = [site.column for site in network.loads]
    pv_columns = [site.column for site in network.pvs]
    _require_columns(frame, [TIMESTAMP_COLUMN], path)
    _require_columns(frame, [f"{c}_{s}" for c in load_columns for s in ("p", "q")], path)
    _require_columns(frame, [f"{c}_p" for c in pv_columns], path)

    if len(frame) < min_rows:
        raise DatasetTooShort(f"Dataset {path} has {len(frame)} rows, at least {min_rows} are needed")

    def block(names: List[str]) -> np.ndarray:
        values = frame[names].to_numpy(dtype=float) if names else np.zeros((len(frame), 0))
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"Dataset {path} has non-finite values in {names}")
        return values

    load_p = block([f"{c}_p" for c in load_columns])
    load_q = block([f"{c}_q" for c in load_columns])
    pv_p = block([f"{c}_p" for c in pv_columns])
    if np.any(load_p < 0) or np.any(pv_p < 0):
        raise DatasetError(f"Dataset {path} has negative load or PV active power")

    timestamps = pd.DatetimeIndex(pd.to_datetime(frame[TIMESTAMP_COLUMN]))
    step_minutes = int(round(float(np.median(np.diff(timestamps.asi8))) / 6e10)) if len(timestamps) > 1 else 3
    logger.info(f"Loaded dataset {path}: {len(frame)} rows, {step_minutes}-minute steps")
    return TimeSeriesDataset(step_minutes, timestamps, load_p, load_q, pv_p, load_columns, pv_columns)


def save_dataset(dataset: TimeSeriesDataset, path: str) -> None:
    dataset.to_frame().to_csv(path, index=False, float_format="%.10g")


def _stack(columns: List[np.ndarray], n_rows: int) -> np.ndarray:
    return np.column_stack(columns) if columns else np.zeros((n_rows, 0))


def _peak_rows(dataset: TimeSeriesDataset) -> np.ndarray:
    total = dataset.pv_p.sum(axis=1)
    rows = []
    for day in np.unique(dataset.day):
        idx = np.flatnonzero(dataset.day == day)
        rows.append(idx[int(np.argmax(total[idx]))])
    return np.array(rows, dtype=int)


def injections_at(
    network: NetworkModel, dataset: TimeSeriesDataset, row: int, pv_q: Optional[np.ndarray] = None
) -> InjectionProfile:
    p = np.zeros(network.n_bus)
    q = np.zeros(network.n_bus)
    for k, site in enumerate(network.loads):
        p[site.bus] -= dataset.load_p[row, k]
        q[site.bus] -= dataset.load_q[row, k]
    for k, pv in enumerate(network.pvs):
        p[pv.bus] += dataset.pv_p[row, k]
        if pv_q is not None:
            q[pv.bus] += pv_q[k]
    return InjectionProfile(p, q)


def _max_peak_voltage(
    network: NetworkModel, dataset: TimeSeriesDataset, rows: np.ndarray, opts: SolverOptions
) -> float:
    v_max = -np.inf
    for row in rows:
        sol = solve(network, injections_at(network, dataset, int(row)), opts)
        v_max = max(v_max, float(np.max(sol.v[1:])) if network.n_bus > 1 else network.v0)
    return float(v_max)


def synth_dataset(
    cfg: SynthConfig,
    seed: int,
    network: NetworkModel,
    v_upper: float = 1.05,
    opts: SolverOptions = SolverOptions(),
) -> TimeSeriesDataset:
    """
    Generate a synthetic scenario for the loads and PVs of `network`.

    When pv_peak > 0 the PV series are scaled until midday output under zero reactive control pushes at least
    one bus above v_upper (plus margin), so that the voltage constraint actually binds.
    """
    rng = np.random.default_rng(seed)
    steps_per_day = 24 * 60 // cfg.step_minutes
    n_rows = cfg.days * steps_per_day
    timestamps = pd.date_range(pd.Timestamp(cfg.start).normalize(), periods=n_rows, freq=f"{cfg.step_minutes}min")
    hours = np.arange(n_rows) * cfg.step_minutes / 60.0

    load_shape = profiles.TwoPeakLoad(base=cfg.load_base, peak=cfg.load_peak)
    noise = profiles.MultiplicativeNoise(std=cfg.load_noise)
    load_curve = load_shape.generate_profile(hours, rng)
    load_p = _stack(
        [rng.uniform(0.8, 1.2) * load_curve * noise.generate_profile(hours, rng) for _ in network.loads], n_rows
    )
    load_q = load_p * np.tan(np.arccos(cfg.power_factor))

    bell = profiles.SolarBell(peak=cfg.pv_peak, sunrise=cfg.sunrise_hour, sunset=cfg.sunset_hour)
    clouds = profiles.DailyScale(depth=cfg.cloudiness, steps_per_day=steps_per_day)
    pv_curve = bell.generate_profile(hours, rng) * clouds.generate_profile(hours, rng)
    pv_p = _stack([rng.uniform(0.9, 1.1) * pv_curve for _ in network.pvs], n_rows)

    dataset = TimeSeriesDataset(
        cfg.step_minutes,
        timestamps,
        load_p,
        load_q,
        pv_p,
        [site.column for site in network.loads],
        [site.column for site in network.pvs],
    )
    if cfg.pv_peak == 0 or not network.pvs:
        logger.info("Synthetic scenario has no PV output; skipping the over-voltage check")
        return dataset

    threshold = v_upper + cfg.overvoltage_margin
    rows = _peak_rows(dataset)
    scale = 1.0
    for attempt in range(cfg.max_scale_tries + 1):
        dataset.pv_p = pv_p * scale
        try:
            v_max = _max_peak_voltage(network, dataset, rows, opts)
        except PowerFlowError as e:
            logger.info(f"Power flow failed at PV scale {scale:.3f} ({e}); scaling PV down")
            scale /= cfg.scale_factor
            continue
        if v_max > threshold:
            logger.info(f"Synthetic scenario reaches {v_max:.4f} p.u. at midday with PV scale {scale:.3f}")
            return dataset
        logger.info(f"Attempt {attempt}: midday peak {v_max:.4f} p.u. <= {threshold:.4f}; scaling PV up")
        scale *= cfg.scale_factor
    raise SynthesisError(
        f"Could not make midday PV exceed {threshold:.3f} p.u. within {cfg.max_scale_tries} rescaling attempts"
    )


def resolve_s_ratings(network: NetworkModel, dataset: TimeSeriesDataset, factor: float = 1.2) -> np.ndarray:
    """Inverter ratings per PV; missing ratings default to factor x the PV's peak active power in the dataset."""
    ratings = np.empty(len(network.pvs))
    for k, pv in enumerate(network.pvs):
        if pv.s_rating is not None:
            ratings[k] = pv.s_rating
        else:
            peak = float(np.max(dataset.pv_p[:, k])) if len(dataset) else 0.0
            ratings[k] = factor * peak
            logger.debug(f"PV on bus {pv.bus} has no rating, using {ratings[k]:.4f} p.u.")
    return ratings
