"""Resource-unit accounting: reservations, real-time charges, and overage.

Consumption is metered in abstract resource units (RU): transferring one
data unit between APs costs 1 RU, processing one unit for training costs
0.5 RU, each model upload or broadcast costs 0.1 RU, and every local
training step costs 10 RU.  Reservations are sized from mean arrival rates
per sub-pool; whenever real-time demand in a second exceeds the reserved
budget for a category group (communication or computing), the excess is
charged again at ``overage_multiplier - 1`` times its cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fedsim import SimConfig, TrainingTrace
from .pooling import PoolingPolicy
from .topology import NetworkTopology


@dataclass(frozen=True)
class CostModel:
    ru_per_unit_migrated: float = 1.0
    ru_per_unit_processed: float = 0.5
    ru_per_model_exchange: float = 0.1
    ru_per_training_event: float = 10.0
    overage_multiplier: float = 2.0

    def __post_init__(self):
        for name in (
            "ru_per_unit_migrated",
            "ru_per_unit_processed",
            "ru_per_model_exchange",
            "ru_per_training_event",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.overage_multiplier < 1:
            raise ValueError("overage_multiplier must be >= 1")


@dataclass(frozen=True)
class ReservationPlan:
    """Expected RU/second per sub-pool, split by category.

    Communication covers data migration and model exchange; computing covers
    sample processing and training steps.  Migration and processing demand
    arrives every second; exchange and training happen on a known cadence, so
    their amortized rates correspond to quotas of ``rate * period`` RU landing
    on the scheduled seconds.
    """

    horizon_s: int
    migration_rate: np.ndarray  # (k,) RU/s
    processing_rate: np.ndarray
    exchange_rate: np.ndarray
    training_rate: np.ndarray
    agg_period_s: int = 10
    local_period_s: int = 1

    @property
    def n_subpools(self) -> int:
        return len(self.migration_rate)

    @property
    def communication_rate(self) -> np.ndarray:
        return self.migration_rate + self.exchange_rate

    @property
    def computing_rate(self) -> np.ndarray:
        return self.processing_rate + self.training_rate

    @property
    def communication_total(self) -> float:
        return float(self.communication_rate.sum() * self.horizon_s)

    @property
    def computing_total(self) -> float:
        return float(self.computing_rate.sum() * self.horizon_s)


@dataclass
class CostLedger:
    """Per-category RU totals and per-second series for one run."""

    horizon_s: int
    migration_series: np.ndarray  # (horizon_s,) indexed by second-1
    processing_series: np.ndarray
    exchange_series: np.ndarray
    training_series: np.ndarray
    overage_comm_series: np.ndarray
    overage_comp_series: np.ndarray

    @property
    def migration_ru(self) -> float:
        return float(self.migration_series.sum())

    @property
    def processing_ru(self) -> float:
        return float(self.processing_series.sum())

    @property
    def exchange_ru(self) -> float:
        return float(self.exchange_series.sum())

    @property
    def training_ru(self) -> float:
        return float(self.training_series.sum())

    @property
    def overage_comm_ru(self) -> float:
        return float(self.overage_comm_series.sum())

    @property
    def overage_comp_ru(self) -> float:
        return float(self.overage_comp_series.sum())

    @property
    def overage_ru(self) -> float:
        return self.overage_comm_ru + self.overage_comp_ru

    @property
    def total_ru(self) -> float:
        return (
            self.migration_ru
            + self.processing_ru
            + self.exchange_ru
            + self.training_ru
            + self.overage_ru
        )


def reserve(
    topology: NetworkTopology,
    policy: PoolingPolicy,
    model: CostModel,
    sim: SimConfig,
) -> ReservationPlan:
    """Size per-sub-pool reservations from mean arrival rates.

    Per pool and second: migration covers every non-aggregator member's mean
    rate, processing covers the whole pool's rate, model exchange amortizes
    one upload plus one broadcast per aggregation round, and training charges
    one step per local period.
    """
    rates = topology.rates()
    if np.any(rates <= 0):
        raise ValueError("topology has unsampled arrival rates")
    k = policy.k
    migration = np.zeros(k)
    processing = np.zeros(k)
    exchange = np.full(k, 2.0 * model.ru_per_model_exchange / sim.agg_period_s)
    training = np.full(k, model.ru_per_training_event / sim.local_period_s)
    for p in range(k):
        members = policy.members(p)
        agg = policy.aggregators[p]
        migration[p] = model.ru_per_unit_migrated * sum(
            rates[i] for i in members if i != agg
        )
        processing[p] = model.ru_per_unit_processed * sum(rates[i] for i in members)
    return ReservationPlan(
        horizon_s=sim.horizon_s,
        migration_rate=migration,
        processing_rate=processing,
        exchange_rate=exchange,
        training_rate=training,
        agg_period_s=sim.agg_period_s,
        local_period_s=sim.local_period_s,
    )


def account(
    trace: TrainingTrace, plan: ReservationPlan, model: CostModel
) -> CostLedger:
    """Charge a trace against a reservation plan.

    Actual RU is accumulated per second and sub-pool; any excess over the
    reserved communication or computing budget of that pool-second is charged
    again at ``overage_multiplier - 1``.  The scheduled categories (exchange,
    training) have their whole per-period quota available on the seconds they
    fire, so a run that exactly meets expectations incurs no overage.
    """
    k = plan.n_subpools
    trace.validate(n_subpools=k)
    horizon = plan.horizon_s

    migration = np.zeros(horizon)
    processing = np.zeros(horizon)
    exchange = np.zeros(horizon)
    training = np.zeros(horizon)
    comm_by_pool = np.zeros((horizon, k))
    comp_by_pool = np.zeros((horizon, k))

    seconds = np.arange(1, horizon + 1)
    exch_quota = np.where(
        seconds % plan.agg_period_s == 0, plan.exchange_rate[None, :].T * plan.agg_period_s, 0.0
    ).T  # (horizon, k)
    train_quota = np.where(
        seconds % plan.local_period_s == 0,
        plan.training_rate[None, :].T * plan.local_period_s,
        0.0,
    ).T
    comm_budget = plan.migration_rate[None, :] + exch_quota
    comp_budget = plan.processing_rate[None, :] + train_quota

    for ev in trace.events:
        if ev.t < 1 or ev.kind in ("arrival", "eval", "aggregate"):
            continue
        if ev.t > horizon:
            raise ValueError(f"event at t={ev.t} beyond plan horizon {horizon}")
        s = ev.t - 1
        if ev.kind == "migration":
            ru = model.ru_per_unit_migrated * ev.data_units
            migration[s] += ru
            comm_by_pool[s, ev.subpool_id] += ru
        elif ev.kind == "local_train":
            proc = model.ru_per_unit_processed * ev.data_units
            processing[s] += proc
            training[s] += model.ru_per_training_event
            comp_by_pool[s, ev.subpool_id] += proc + model.ru_per_training_event
        elif ev.kind in ("upload", "broadcast"):
            ru = model.ru_per_model_exchange * ev.model_count
            exchange[s] += ru
            comm_by_pool[s, ev.subpool_id] += ru

    extra = model.overage_multiplier - 1.0
    comm_excess = np.maximum(0.0, comm_by_pool - comm_budget)
    comp_excess = np.maximum(0.0, comp_by_pool - comp_budget)
    return CostLedger(
        horizon_s=horizon,
        migration_series=migration,
        processing_series=processing,
        exchange_series=exchange,
        training_series=training,
        overage_comm_series=comm_excess.sum(axis=1) * extra,
        overage_comp_series=comp_excess.sum(axis=1) * extra,
    )


def summarize(ledger: CostLedger) -> dict:
    """Collapse a ledger into communication/computing/total RU and the per-second mean."""
    communication = ledger.migration_ru + ledger.exchange_ru + ledger.overage_comm_ru
    computing = ledger.processing_ru + ledger.training_ru + ledger.overage_comp_ru
    total = communication + computing
    return {
        "communication_ru": communication,
        "computing_ru": computing,
        "total_ru": total,
        "average_ru_per_s": total / ledger.horizon_s,
    }
