"""Training-phase simulator: streaming SGD at sub-pool aggregators plus FedAvg.

Every simulated second each AP receives a Poisson number of fresh samples
from its shard; non-aggregator APs forward their arrivals to their pool's
aggregator (logged as migration, with already-migrated samples served from
the aggregator's cache at no transfer cost).  Aggregators take one SGD step
per local period on everything accrued since their last step.  Every
aggregation period the sub-pool models are combined with FedAvg, weighted by
the number of samples each pool trained in the round, and the global model
is broadcast back.

The classifier is a fixed 784-200-10 fully connected network with ReLU
hidden activation and softmax cross-entropy loss, trained by plain SGD.

Randomness is drawn from documented PCG64 streams so a run is a pure
function of its inputs:

* arrival counts:      ``SeedSequence([seed, 0])``, one vectorized Poisson
  draw per second over APs in id order
* shard recycling:     ``SeedSequence([seed, 1, ap_id])`` per AP
* model initialization ``SeedSequence([seed, 2])`` (first state word)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import LabeledDataset
from .pooling import PoolingPolicy
from .topology import DataShard, NetworkTopology

N_INPUT = 784
N_HIDDEN = 200
N_OUTPUT = 10

EVENT_KINDS = (
    "arrival",
    "migration",
    "local_train",
    "upload",
    "aggregate",
    "broadcast",
    "eval",
)


@dataclass(frozen=True)
class MlpParameters:
    """Weights and biases of the 784-200-10 network."""

    W1: np.ndarray  # (200, 784)
    b1: np.ndarray  # (200,)
    W2: np.ndarray  # (10, 200)
    b2: np.ndarray  # (10,)

    def __post_init__(self):
        expect = {
            "W1": (N_HIDDEN, N_INPUT),
            "b1": (N_HIDDEN,),
            "W2": (N_OUTPUT, N_HIDDEN),
            "b2": (N_OUTPUT,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a)) for a in (self.W1, self.b1, self.W2, self.b2)
        )


def init_mlp(seed: int) -> MlpParameters:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    lim1 = np.sqrt(6.0 / (N_INPUT + N_HIDDEN))
    lim2 = np.sqrt(6.0 / (N_HIDDEN + N_OUTPUT))
    return MlpParameters(
        W1=rng.uniform(-lim1, lim1, size=(N_HIDDEN, N_INPUT)),
        b1=np.zeros(N_HIDDEN),
        W2=rng.uniform(-lim2, lim2, size=(N_OUTPUT, N_HIDDEN)),
        b2=np.zeros(N_OUTPUT),
    )


def _check_batch(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if x.shape[1] != N_INPUT:
        raise ValueError(f"inputs must be {N_INPUT}-vectors, got {x.shape}")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs vs {y.shape[0]} labels")
    return x, y


def forward(params: MlpParameters, x, y):
    """Forward pass: returns (logits, mean softmax cross-entropy loss)."""
    x, y = _check_batch(x, y)
    z1 = x @ params.W1.T + params.b1
    h = np.maximum(z1, 0.0)
    logits = h @ params.W2.T + params.b2
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(len(y)), y]))
    return logits, loss


def gradients(params: MlpParameters, x, y):
    """Backprop gradients of the mean loss: (loss, (gW1, gb1, gW2, gb2))."""
    x, y = _check_batch(x, y)
    n = x.shape[0]
    z1 = x @ params.W1.T + params.b1
    h = np.maximum(z1, 0.0)
    logits = h @ params.W2.T + params.b2

    zmax = logits.max(axis=1, keepdims=True)
    ez = np.exp(logits - zmax)
    probs = ez / ez.sum(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(ez.sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), y]))

    delta2 = probs
    delta2[np.arange(n), y] -= 1.0
    delta2 /= n
    gW2 = delta2.T @ h
    gb2 = delta2.sum(axis=0)
    delta1 = (delta2 @ params.W2) * (z1 > 0.0)
    gW1 = delta1.T @ x
    gb1 = delta1.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def sgd_step(params: MlpParameters, x, y, lr: float) -> MlpParameters:
    """One SGD step on the batch; returns fresh parameters."""
    if np.asarray(x).size == 0:
        raise ValueError("batch must be non-empty")
    _, (gW1, gb1, gW2, gb2) = gradients(params, x, y)
    return MlpParameters(
        W1=params.W1 - lr * gW1,
        b1=params.b1 - lr * gb1,
        W2=params.W2 - lr * gW2,
        b2=params.b2 - lr * gb2,
    )


def fedavg(models: list[MlpParameters], weights) -> MlpParameters:
    """Parameter-wise weighted mean with weights proportional to sample counts."""
    if len(models) == 0:
        raise ValueError("fedavg needs at least one model")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(models),):
        raise ValueError(f"{len(models)} models vs weights of shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total == 0:
        raise ValueError("weights must not all be zero")
    w = w / total
    return MlpParameters(
        W1=sum(wi * m.W1 for wi, m in zip(w, models)),
        b1=sum(wi * m.b1 for wi, m in zip(w, models)),
        W2=sum(wi * m.W2 for wi, m in zip(w, models)),
        b2=sum(wi * m.b2 for wi, m in zip(w, models)),
    )


def evaluate_accuracy(params: MlpParameters, testset: LabeledDataset) -> float:
    """Fraction of test samples whose argmax logit matches the label.

    Ties on the maximum logit resolve to the lowest class index.
    """
    if len(testset) == 0:
        raise ValueError("testset must be non-empty")
    correct = 0
    for start in range(0, len(testset), 4096):
        x = testset.images[start : start + 4096].astype(np.float64)
        z1 = x @ params.W1.T + params.b1
        logits = np.maximum(z1, 0.0) @ params.W2.T + params.b2
        pred = np.argmax(logits, axis=1)
        correct += int(np.sum(pred == testset.labels[start : start + 4096]))
    return correct / len(testset)


@dataclass(frozen=True, slots=True)
class TraceEvent:
    t: int
    kind: str
    ap_id: int | None = None
    subpool_id: int | None = None
    data_units: int = 0
    model_count: int = 0
    accuracy: float | None = None
    loss: float | None = None


@dataclass
class TrainingTrace:
    """Time-ordered event log of one simulation run."""

    events: list[TraceEvent] = field(default_factory=list)

    def validate(self, n_subpools: int | None = None):
        """Check ordering, nonnegative quantities, and upload/aggregate pairing."""
        prev_t = -1
        uploads_at_t = 0
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ValueError(f"unknown event kind {ev.kind!r}")
            if ev.t < prev_t:
                raise ValueError(f"timestamps decrease at t={ev.t}")
            if ev.data_units < 0 or ev.model_count < 0:
                raise ValueError(f"negative quantity in event {ev}")
            if ev.t != prev_t:
                uploads_at_t = 0
            if ev.kind == "upload":
                uploads_at_t += ev.model_count
            if ev.kind == "aggregate" and n_subpools is not None:
                if uploads_at_t != n_subpools:
                    raise ValueError(
                        f"aggregate at t={ev.t} saw {uploads_at_t} uploads, "
                        f"expected {n_subpools}"
                    )
            prev_t = ev.t

    def by_kind(self, kind: str) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind == kind]


@dataclass(frozen=True)
class SimConfig:
    """Run-length, cadence, and optimizer settings for one simulation."""

    horizon_s: int
    local_period_s: int = 1
    agg_period_s: int = 10
    lr: float = 0.01
    eval_period_s: int = 10
    seed: int = 0
    deterministic_arrivals: bool = False

    def __post_init__(self):
        if self.local_period_s < 1 or self.agg_period_s < 1 or self.eval_period_s < 1:
            raise ValueError("periods must be >= 1 second")
        if self.agg_period_s % self.local_period_s != 0:
            raise ValueError(
                f"agg_period_s={self.agg_period_s} must be a multiple of "
                f"local_period_s={self.local_period_s}"
            )
        if self.horizon_s < self.agg_period_s:
            raise ValueError("horizon must cover at least one aggregation round")


class _ShardQueue:
    """Without-replacement sampler over one shard, reshuffling when exhausted."""

    def __init__(self, sample_indices: np.ndarray, seed_seq):
        self._indices = np.asarray(sample_indices)
        self._rng = np.random.default_rng(seed_seq)
        self._order = self._rng.permutation(len(self._indices))
        self._pos = 0

    def draw(self, m: int):
        """Return (dataset indices, positions within the shard) for m samples."""
        taken = []
        while m > 0:
            if self._pos == len(self._order):
                self._order = self._rng.permutation(len(self._indices))
                self._pos = 0
            take = min(m, len(self._order) - self._pos)
            taken.append(self._order[self._pos : self._pos + take])
            self._pos += take
            m -= take
        positions = np.concatenate(taken)
        return self._indices[positions], positions


@dataclass
class SimResult:
    trace: TrainingTrace
    final_params: MlpParameters
    accuracy_curve: tuple[tuple[int, float], ...]
    loss_curve: tuple[tuple[int, float], ...]

    @property
    def final_accuracy(self) -> float:
        return self.accuracy_curve[-1][1]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]


def probe_batch(testset: LabeledDataset, size: int = 1024):
    """Fixed held-out batch used for the reported loss curve."""
    n = min(size, len(testset))
    return testset.images[:n].astype(np.float64), testset.labels[:n]


def simulate(
    topology: NetworkTopology,
    policy: PoolingPolicy,
    shards: list[DataShard],
    dataset: LabeledDataset,
    sim: SimConfig,
    testset: LabeledDataset,
) -> SimResult:
    """Run the training phase for one pooling policy.

    ``dataset`` is the training set backing the shard sample indices.  The
    returned trace carries every arrival, migration, training step, model
    exchange, and evaluation, ready for resource accounting.
    """
    n = topology.n_aps
    if policy.n_aps != n:
        raise ValueError(f"policy covers {policy.n_aps} APs, topology has {n}")
    if sorted(s.ap_id for s in shards) != list(range(n)):
        raise ValueError("shards must cover every AP exactly once")
    rates = topology.rates()
    if np.any(rates <= 0):
        raise ValueError("topology has unsampled arrival rates")

    shards_by_ap = {s.ap_id: s for s in shards}
    k = policy.k
    arr_rng = np.random.default_rng(np.random.SeedSequence([sim.seed, 0]))
    queues = [
        _ShardQueue(
            shards_by_ap[i].sample_indices, np.random.SeedSequence([sim.seed, 1, i])
        )
        for i in range(n)
    ]
    init_seed = int(np.random.SeedSequence([sim.seed, 2]).generate_state(1)[0])

    global_params = init_mlp(init_seed)
    pool_params = [global_params] * k
    pool_buffer: list[list[int]] = [[] for _ in range(k)]
    trained_since_agg = [0] * k
    migrated = [np.zeros(len(shards_by_ap[i]), dtype=bool) for i in range(n)]
    det_acc = np.zeros(n)

    probe_x, probe_y = probe_batch(testset)
    events: list[TraceEvent] = []
    acc_curve: list[tuple[int, float]] = []
    loss_curve: list[tuple[int, float]] = []

    def run_eval(t: int):
        acc = evaluate_accuracy(global_params, testset)
        _, loss = forward(global_params, probe_x, probe_y)
        acc_curve.append((t, acc))
        loss_curve.append((t, loss))
        events.append(TraceEvent(t=t, kind="eval", accuracy=acc, loss=loss))

    run_eval(0)
    for t in range(1, sim.horizon_s + 1):
        # arrivals and migration to the pool aggregator
        if sim.deterministic_arrivals:
            det_acc += rates
            counts = np.floor(det_acc).astype(np.int64)
            det_acc -= counts
        else:
            counts = arr_rng.poisson(rates)
        for i in range(n):
            c = int(counts[i])
            if c == 0:
                continue
            events.append(TraceEvent(t=t, kind="arrival", ap_id=i, data_units=c))
            sample_idx, positions = queues[i].draw(c)
            pool = policy.assignment[i]
            if i != policy.aggregators[pool]:
                fresh = positions[~migrated[i][positions]]
                # recycled samples are already cached at the aggregator
                if len(fresh) > 0:
                    migrated[i][fresh] = True
                    events.append(
                        TraceEvent(
                            t=t,
                            kind="migration",
                            ap_id=i,
                            subpool_id=pool,
                            data_units=len(np.unique(fresh)),
                        )
                    )
            pool_buffer[pool].extend(int(s) for s in sample_idx)

        # one SGD step per aggregator on everything accrued since its last step
        if t % sim.local_period_s == 0:
            for pool in range(k):
                buf = pool_buffer[pool]
                if not buf:
                    continue
                x = dataset.images[buf].astype(np.float64)
                y = dataset.labels[buf]
                pool_params[pool] = sgd_step(pool_params[pool], x, y, sim.lr)
                trained_since_agg[pool] += len(buf)
                events.append(
                    TraceEvent(
                        t=t,
                        kind="local_train",
                        ap_id=policy.aggregators[pool],
                        subpool_id=pool,
                        data_units=len(buf),
                    )
                )
                pool_buffer[pool] = []

        # FedAvg round: uploads, weighted mean, broadcast
        if t % sim.agg_period_s == 0 and sum(trained_since_agg) > 0:
            for pool in range(k):
                events.append(
                    TraceEvent(t=t, kind="upload", subpool_id=pool, model_count=1)
                )
            global_params = fedavg(pool_params, trained_since_agg)
            events.append(TraceEvent(t=t, kind="aggregate", model_count=k))
            for pool in range(k):
                events.append(
                    TraceEvent(t=t, kind="broadcast", subpool_id=pool, model_count=1)
                )
                pool_params[pool] = global_params
            trained_since_agg = [0] * k

        if t % sim.eval_period_s == 0 or t == sim.horizon_s:
            run_eval(t)

    trace = TrainingTrace(events=events)
    return SimResult(
        trace=trace,
        final_params=global_params,
        accuracy_curve=tuple(acc_curve),
        loss_curve=tuple(loss_curve),
    )
