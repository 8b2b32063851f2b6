"""
Polar Newton-Raphson AC power flow for radial networks.

The slack bus is fixed at (v0, 0) and removed from the unknowns. Every other bus is treated as a PQ bus.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from voltage_control_bench.grid.grid_model import SLACK_BUS, NetworkModel, UnknownBus

logger = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    pass


class NonConvergence(PowerFlowError):
    def __init__(self, message: str, trace: List[float]) -> None:
        super().__init__(message)
        self.trace = trace


class CollapseDetected(PowerFlowError):
    pass


@dataclass(frozen=True)
class InjectionProfile:
    """Net injections p = p_pv - p_load and q = q_pv - q_load, indexed by bus. The slack entry is ignored."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValueError(f"Injection vectors must be 1-D and equal length, got {self.p.shape} and {self.q.shape}")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("Injections must be finite")

    @classmethod
    def zeros(cls, n_bus: int) -> "InjectionProfile":
        return cls(np.zeros(n_bus), np.zeros(n_bus))


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iter: int = 50
    v_floor: float = 0.3


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray
    theta: np.ndarray
    i_branch: np.ndarray
    p_loss: float
    iterations: int
    residual_norm: float
    p_injected: np.ndarray = field(repr=False)
    q_injected: np.ndarray = field(repr=False)

    @property
    def voltage(self) -> np.ndarray:
        return self.v * np.exp(1j * self.theta)


def _check_length(network: NetworkModel, n: int, what: str) -> None:
    if n != network.n_bus:
        raise UnknownBus(f"{what} has {n} entries but the network has {network.n_bus} buses")


def _power_injections(ybus: np.ndarray, voltage: np.ndarray) -> np.ndarray:
    return voltage * np.conj(ybus @ voltage)


def _jacobian(ybus: np.ndarray, voltage: np.ndarray, pq: np.ndarray) -> np.ndarray:
    i_bus = ybus @ voltage
    diag_v = np.diag(voltage)
    diag_v_norm = np.diag(voltage / np.abs(voltage))
    ds_dvm = diag_v @ np.conj(ybus @ diag_v_norm) + np.diag(np.conj(i_bus)) @ diag_v_norm
    ds_dva = 1j * diag_v @ np.conj(np.diag(i_bus) - ybus @ diag_v)

    ds_dva = ds_dva[np.ix_(pq, pq)]
    ds_dvm = ds_dvm[np.ix_(pq, pq)]
    return np.block([[ds_dva.real, ds_dvm.real], [ds_dva.imag, ds_dvm.imag]])


def _mismatch(network: NetworkModel, inj: InjectionProfile, voltage: np.ndarray, pq: np.ndarray) -> np.ndarray:
    s_calc = _power_injections(network.ybus, voltage)
    return np.concatenate([inj.p[pq] - s_calc.real[pq], inj.q[pq] - s_calc.imag[pq]])


def _wrap(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    outside = np.abs(out) > np.pi
    out[outside] = np.angle(np.exp(1j * out[outside]))
    return out


def branch_currents(network: NetworkModel, voltage: np.ndarray) -> np.ndarray:
    """Ohm's law on every branch, in the order of network.branches, flowing from -> to."""
    return np.array([br.y * (voltage[br.from_bus] - voltage[br.to_bus]) for br in network.branches], dtype=complex)


def solve(
    network: NetworkModel,
    inj: InjectionProfile,
    opts: SolverOptions = SolverOptions(),
    warm_start: Optional[PowerFlowSolution] = None,
) -> PowerFlowSolution:
    _check_length(network, len(inj.p), "Injection profile")
    pq = np.array(network.non_slack, dtype=int)
    n_pq = len(pq)

    if warm_start is not None:
        vm, va = warm_start.v.copy(), warm_start.theta.copy()
    else:
        vm, va = np.full(network.n_bus, network.v0), np.zeros(network.n_bus)
    vm[SLACK_BUS], va[SLACK_BUS] = network.v0, 0.0

    trace: List[float] = []
    iterations = 0
    while True:
        voltage = vm * np.exp(1j * va)
        mismatch = _mismatch(network, inj, voltage, pq)
        norm = float(np.max(np.abs(mismatch))) if n_pq else 0.0
        trace.append(norm)
        if norm <= opts.tolerance:
            break
        if iterations >= opts.max_iter:
            raise NonConvergence(
                f"Power flow did not converge in {opts.max_iter} iterations (mismatch {norm:.3e})", trace
            )

        jac = _jacobian(network.ybus, voltage, pq)
        try:
            dx = np.linalg.solve(jac, mismatch)
        except np.linalg.LinAlgError as e:
            raise NonConvergence(f"Singular Jacobian at iteration {iterations}: {e}", trace) from e
        va[pq] += dx[:n_pq]
        vm[pq] += dx[n_pq:]
        iterations += 1

        if not np.all(np.isfinite(vm)) or np.any(vm[pq] < opts.v_floor):
            raise CollapseDetected(
                f"Voltage fell below {opts.v_floor} p.u. at iteration {iterations}; injections look infeasible"
            )

    voltage = vm * np.exp(1j * va)
    s_calc = _power_injections(network.ybus, voltage)
    i_branch = branch_currents(network, voltage)
    logger.debug(f"Power flow converged in {iterations} iterations, mismatch {trace[-1]:.3e}")
    return PowerFlowSolution(
        v=vm,
        theta=_wrap(va),
        i_branch=i_branch,
        p_loss=float(np.sum(network.resistances * np.abs(i_branch) ** 2)) if network.branches else 0.0,
        iterations=iterations,
        residual_norm=trace[-1],
        p_injected=s_calc.real,
        q_injected=s_calc.imag,
    )


def residuals(
    network: NetworkModel, inj: InjectionProfile, v: np.ndarray, theta: np.ndarray
) -> Dict[int, Tuple[float, float]]:
    """Specified minus computed injection at every non-slack bus."""
    _check_length(network, len(inj.p), "Injection profile")
    _check_length(network, len(v), "Voltage vector")
    _check_length(network, len(theta), "Angle vector")
    pq = np.array(network.non_slack, dtype=int)
    mismatch = _mismatch(network, inj, np.asarray(v) * np.exp(1j * np.asarray(theta)), pq)
    n_pq = len(pq)
    return {int(bus): (float(mismatch[k]), float(mismatch[n_pq + k])) for k, bus in enumerate(pq)}


def line_loss(network: NetworkModel, sol: PowerFlowSolution) -> float:
    if not network.branches:
        return 0.0
    return float(np.sum(network.resistances * np.abs(sol.i_branch) ** 2))
