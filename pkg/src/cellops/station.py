"""Deterministic digital twin of an SDR-class base station.

Lifecycle state machine, configuration application, per-tick KPI telemetry
and fault injection. All randomness derives from the construction seed (a
static per-UE pathloss draw), so identical seeds and operation sequences
produce bit-identical KPI streams.
"""

from __future__ import annotations

import json
import math
import random
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .cellcalc import CellConfig, ValidationReport, prb_for_bandwidth, validate_config

UE_POPULATION = 20
PATHLOSS_MIN_DB = 80.0
PATHLOSS_MAX_DB = 120.0
ATTACH_RSRP_MIN_DBM = -110.0
NO_UE_RSRP_DBM = -140.0  # avg_rsrp sentinel when nothing is attached
# spectral efficiency ramps linearly from 0 at -120 dBm to the 5 bit/s/Hz cap
EFF_RAMP_FLOOR_DBM = -120.0
EFF_MAX_BITS_PER_HZ = 5.0
PRB_MHZ = 0.18
PA_OVERHEAT_DROP_DB = 20.0
SYNC_LOSS_DECAY_TICKS = 3
# avg RSRP at or below this marks a PA in thermal derating (default config runs ~-70 dBm)
PA_RSRP_THRESHOLD_DBM = -85.0
KPI_BUFFER_CAPACITY = 3600


class Lifecycle(str, Enum):
    STOPPED = "STOPPED"
    CONFIGURED = "CONFIGURED"
    RUNNING = "RUNNING"
    FAULT = "FAULT"


class FaultKind(str, Enum):
    PA_OVERHEAT = "PA_OVERHEAT"
    SYNC_LOSS = "SYNC_LOSS"
    BACKHAUL_DOWN = "BACKHAUL_DOWN"


class StationError(Exception):
    """Base class for station control errors."""


class WrongStateError(StationError):
    def __init__(self, op: str, lifecycle: Lifecycle):
        super().__init__(f"{op} not allowed in lifecycle {lifecycle.value}")
        self.op, self.lifecycle = op, lifecycle


class InvalidConfigError(StationError):
    def __init__(self, report: ValidationReport):
        msgs = "; ".join(f"{i.field}: {i.message}" for i in report.issues if i.severity == "error")
        super().__init__(f"config rejected: {msgs}")
        self.report = report


class NonPositiveDtError(StationError):
    def __init__(self, dt_s):
        super().__init__(f"tick dt must be positive, got {dt_s!r}")
        self.dt_s = dt_s


@dataclass(frozen=True)
class KpiSample:
    sim_time_s: float
    lifecycle: str
    connected_ues: int
    attach_attempts: int
    attach_successes: int
    avg_rsrp_dbm: float
    dl_throughput_mbps: float

    def to_dict(self) -> dict:
        return {
            "sim_time_s": self.sim_time_s,
            "lifecycle": self.lifecycle,
            "connected_ues": self.connected_ues,
            "attach_attempts": self.attach_attempts,
            "attach_successes": self.attach_successes,
            "avg_rsrp_dbm": self.avg_rsrp_dbm,
            "dl_throughput_mbps": self.dl_throughput_mbps,
        }


@dataclass(frozen=True)
class StationSnapshot:
    """Public read view; per-UE internals never leave the simulator."""

    lifecycle: str
    active_config: CellConfig | None
    active_fault: str | None
    sim_time_s: float

    def to_dict(self) -> dict:
        return {
            "lifecycle": self.lifecycle,
            "active_config": None if self.active_config is None else self.active_config.to_dict(),
            "active_fault": self.active_fault,
            "sim_time_s": self.sim_time_s,
        }


class Station:
    """One simulated cell. Mutating calls must come from a single owner."""

    def __init__(self, seed: int):
        self.seed = seed
        rng = random.Random(seed)
        self._pathloss = [rng.uniform(PATHLOSS_MIN_DB, PATHLOSS_MAX_DB) for _ in range(UE_POPULATION)]
        self.lifecycle = Lifecycle.STOPPED
        self.active_config: CellConfig | None = None
        self.active_fault: FaultKind | None = None
        self.sim_time_s = 0.0
        self._attached: set[int] = set()
        self._sync_detach_quota = 0

    def apply_config(self, config: CellConfig) -> None:
        if self.lifecycle not in (Lifecycle.STOPPED, Lifecycle.CONFIGURED):
            raise WrongStateError("apply_config", self.lifecycle)
        report = validate_config(config)
        if not report.valid:
            raise InvalidConfigError(report)
        self.active_config = CellConfig.from_dict(config.to_dict())
        self.lifecycle = Lifecycle.CONFIGURED

    def start(self) -> None:
        if self.lifecycle is not Lifecycle.CONFIGURED:
            raise WrongStateError("start", self.lifecycle)
        self.lifecycle = Lifecycle.RUNNING

    def stop(self) -> None:
        # keeps the applied config so a stopped cell can be reconfigured or re-applied
        if self.lifecycle not in (Lifecycle.RUNNING, Lifecycle.FAULT):
            raise WrongStateError("stop", self.lifecycle)
        self.lifecycle = Lifecycle.STOPPED
        self.active_fault = None
        self._attached.clear()

    def reset(self) -> None:
        # sim_time is wall-like and survives reset so audit timestamps stay monotone
        self.lifecycle = Lifecycle.STOPPED
        self.active_config = None
        self.active_fault = None
        self._attached.clear()

    def inject_fault(self, kind: FaultKind) -> None:
        if self.lifecycle is not Lifecycle.RUNNING:
            raise WrongStateError("inject_fault", self.lifecycle)
        self.lifecycle = Lifecycle.FAULT
        self.active_fault = FaultKind(kind)
        # sync loss sheds a third of the affected UEs per tick, weakest first
        self._sync_detach_quota = math.ceil(len(self._attached) / SYNC_LOSS_DECAY_TICKS)

    def tick(self, dt_s: float) -> KpiSample:
        if not isinstance(dt_s, (int, float)) or isinstance(dt_s, bool) or dt_s <= 0:
            raise NonPositiveDtError(dt_s)
        self.sim_time_s += float(dt_s)

        if self.lifecycle in (Lifecycle.STOPPED, Lifecycle.CONFIGURED):
            return KpiSample(self.sim_time_s, self.lifecycle.value, 0, 0, 0, NO_UE_RSRP_DBM, 0.0)

        cfg = self.active_config
        eff_tx = cfg.tx_power_dbm
        if self.active_fault is FaultKind.PA_OVERHEAT:
            eff_tx -= PA_OVERHEAT_DROP_DB
        rsrp = [eff_tx - pl for pl in self._pathloss]

        attempts = UE_POPULATION
        if self.active_fault is FaultKind.SYNC_LOSS:
            successes = 0
            if self._attached and self._sync_detach_quota:
                weakest = sorted(self._attached, key=lambda i: (-self._pathloss[i], i))
                for i in weakest[: self._sync_detach_quota]:
                    self._attached.discard(i)
        else:
            self._attached = {i for i in range(UE_POPULATION) if rsrp[i] >= ATTACH_RSRP_MIN_DBM}
            successes = len(self._attached)

        connected = len(self._attached)
        if connected:
            avg_rsrp = sum(rsrp[i] for i in self._attached) / connected
        else:
            avg_rsrp = NO_UE_RSRP_DBM

        throughput = 0.0
        if self.lifecycle is Lifecycle.RUNNING and connected:
            prb = prb_for_bandwidth(cfg.bandwidth_mhz)
            share = PRB_MHZ * prb / connected
            for i in self._attached:
                eff = min(max((rsrp[i] - EFF_RAMP_FLOOR_DBM) / 10.0, 0.0), EFF_MAX_BITS_PER_HZ)
                throughput += share * eff

        return KpiSample(
            self.sim_time_s, self.lifecycle.value, connected, attempts, successes, avg_rsrp, throughput
        )

    def snapshot(self) -> StationSnapshot:
        cfg = None if self.active_config is None else CellConfig.from_dict(self.active_config.to_dict())
        fault = None if self.active_fault is None else self.active_fault.value
        return StationSnapshot(self.lifecycle.value, cfg, fault, self.sim_time_s)


def classify_fault(samples: list[KpiSample]) -> FaultKind | None:
    """Name the injected fault from a short run of post-fault samples.

    Thresholds the three signature KPIs: zero attach successes mean sync
    loss, depressed average RSRP means PA derating, zero throughput with
    healthy attaches means a dead backhaul. Tuned for the default scenario
    population; returns None for healthy or unrecognizable streams.
    """
    active = [s for s in samples if s.attach_attempts > 0]
    if not active:
        return None
    if all(s.attach_successes == 0 for s in active):
        return FaultKind.SYNC_LOSS
    if all(s.connected_ues > 0 for s in active) and (
        sum(s.avg_rsrp_dbm for s in active) / len(active) <= PA_RSRP_THRESHOLD_DBM
    ):
        return FaultKind.PA_OVERHEAT
    if all(s.dl_throughput_mbps == 0.0 for s in active):
        return FaultKind.BACKHAUL_DOWN
    return None


class StationHost:
    """Single-writer owner of one Station plus its KPI ring buffer.

    All mutations are serialized through the internal lock; reads hand out
    immutable snapshots and samples that are safe to share across threads.
    When a snapshot directory is set, every successfully applied config is
    persisted there as a numbered JSON file.
    """

    def __init__(
        self,
        seed: int,
        kpi_capacity: int = KPI_BUFFER_CAPACITY,
        snapshot_dir: "str | None" = None,
    ):
        self._station = Station(seed)
        self._lock = threading.RLock()
        self._kpis: deque[KpiSample] = deque(maxlen=kpi_capacity)
        self._snapshot_dir = None if snapshot_dir is None else Path(snapshot_dir)
        self._applies = 0
        if self._snapshot_dir is not None:
            self._snapshot_dir.mkdir(parents=True, exist_ok=True)
            self._applies = len(list(self._snapshot_dir.glob("*.json")))

    @property
    def seed(self) -> int:
        return self._station.seed

    def apply_config(self, config: CellConfig) -> None:
        with self._lock:
            self._station.apply_config(config)
            self._applies += 1
            if self._snapshot_dir is not None:
                path = self._snapshot_dir / f"config-{self._applies:06d}.json"
                path.write_text(json.dumps(self._station.active_config.to_dict(), sort_keys=True))

    def start(self) -> None:
        with self._lock:
            self._station.start()

    def stop(self) -> None:
        with self._lock:
            self._station.stop()

    def reset(self) -> None:
        with self._lock:
            self._station.reset()

    def inject_fault(self, kind: FaultKind) -> None:
        with self._lock:
            self._station.inject_fault(kind)

    def tick(self, ticks: int = 1, dt_s: float = 1.0) -> list[KpiSample]:
        with self._lock:
            samples = [self._station.tick(dt_s) for _ in range(ticks)]
            self._kpis.extend(samples)
            return samples

    def snapshot(self) -> StationSnapshot:
        with self._lock:
            return self._station.snapshot()

    def latest_kpi(self) -> KpiSample | None:
        with self._lock:
            return self._kpis[-1] if self._kpis else None

    def kpi_window(self, window_s: float) -> list[KpiSample]:
        with self._lock:
            if not self._kpis:
                return []
            cutoff = self._kpis[-1].sim_time_s - window_s
            return [s for s in self._kpis if s.sim_time_s > cutoff]
