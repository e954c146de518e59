"""End-to-end acceptance suite.

Each test covers one exit criterion at its stated tolerance and prints one
PASS line (visible with ``pytest tests/test_acceptance.py -s``).  The
reference sweep (32 APs, horizon 600 s, 5 seeds) is executed once per
session and shared across the trend, surrogate, and selection criteria.
"""

import itertools
import math
from collections import defaultdict

import numpy as np
import pytest

import edgepool
from edgepool import (
    SimConfig,
    datasets,
    evaluate_accuracy,
    fedavg,
    form_subpools,
    forward,
    generate_topology,
    gradients,
    init_mlp,
    kmeans,
    partition_noniid,
    sample_arrival_rates,
    sgd_step,
    simulate,
)
from edgepool.experiment import (
    ExperimentConfig,
    fit_and_select,
    run_single,
    run_sweep,
)
from edgepool.fedsim import probe_batch
from edgepool.surrogate import (
    GprHyperparams,
    PolicyObservation,
    gpr_fit,
    gpr_predict,
    loo_mean_absolute_error,
)

pytestmark = pytest.mark.acceptance

SEEDS = [1, 3, 5, 7, 9]
K_GRID = [1, 2, 4, 8, 16, 32]

# regression pin: reference-environment values for (k=8, lambda_max=1, seed=7)
# at horizon 600 s; tolerance covers BLAS kernel variation across machines
REF_K8_ACCURACY = 0.9527
REF_K8_TOTAL_RU_AVG = 83.17700415409207


def _report(name):
    print(f"\nACCEPTANCE PASS: {name}")


@pytest.fixture(scope="session")
def ref_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("refdata")
    return datasets.write_synthetic_digits(out, n_train=60000, n_test=10000, seed=0)


@pytest.fixture(scope="session")
def ref_config(ref_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("refruns")
    return ExperimentConfig(
        lambda_max=[1.0],
        k=list(K_GRID),
        horizon_s=600,
        seeds=list(SEEDS),
        train_images=str(ref_data["train_images"]),
        train_labels=str(ref_data["train_labels"]),
        test_images=str(ref_data["test_images"]),
        test_labels=str(ref_data["test_labels"]),
        n_aps=32,
        eval_period_s=200,
        out_dir=str(out / "poolsweep"),
        workers=2,
    )


@pytest.fixture(scope="session")
def ref_sweep(ref_config):
    result = run_sweep(ref_config)
    assert not result.failures
    return result


@pytest.fixture(scope="session")
def rate_sweep_rows(ref_config, ref_sweep, tmp_path_factory):
    import dataclasses

    low_cfg = dataclasses.replace(
        ref_config,
        k=[8],
        lambda_max=[0.25, 0.5],
        out_dir=str(tmp_path_factory.mktemp("ratesweep")),
    )
    low = run_sweep(low_cfg)
    assert not low.failures
    rows = list(low.rows) + [r for r in ref_sweep.rows if r["k"] == 8]
    return rows


def _mean_by(rows, group_key, value_key):
    grouped = defaultdict(list)
    for r in rows:
        grouped[r[group_key]].append(r[value_key])
    return {g: float(np.mean(v)) for g, v in grouped.items()}


class TestGradientOracle:
    def test_backprop_matches_central_differences(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for draw in range(10):
            params = edgepool.MlpParameters(
                W1=rng.normal(0, 0.08, (200, 784)),
                b1=rng.normal(0, 0.08, 200),
                W2=rng.normal(0, 0.08, (10, 200)),
                b2=rng.normal(0, 0.08, 10),
            )
            x = rng.uniform(0, 1, size=(5, 784))
            y = rng.integers(0, 10, size=5)
            _, (gW1, gb1, gW2, gb2) = gradients(params, x, y)
            grads = {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}
            arrays = {"W1": params.W1, "b1": params.b1, "W2": params.W2, "b2": params.b2}
            for name, g in grads.items():
                flat_idx = rng.choice(g.size, size=min(40, g.size), replace=False)
                for f in flat_idx:
                    index = np.unravel_index(f, g.shape)
                    eps = 1e-4
                    bump = {k: v.copy() for k, v in arrays.items()}
                    bump[name][index] += eps
                    _, up = forward(edgepool.MlpParameters(**bump), x, y)
                    bump[name][index] -= 2 * eps
                    _, down = forward(edgepool.MlpParameters(**bump), x, y)
                    fd = (up - down) / (2 * eps)
                    assert np.isclose(g[index], fd, rtol=1e-4, atol=1e-9), (
                        f"draw {draw} {name}{index}: {g[index]} vs fd {fd}"
                    )
                    checked += 1
        assert checked >= 10 * 4 * 10
        _report(
            "gradient oracle: backprop matches central finite differences "
            f"(rtol 1e-4, {checked} coordinates over 10 draws)"
        )


class TestCentralizedEquivalence:
    def test_k1_matches_centralized_loop_bitwise(self, ref_data):
        train = datasets.load_dataset(ref_data["train_images"], ref_data["train_labels"])
        test = datasets.load_dataset(ref_data["test_images"], ref_data["test_labels"])
        topo = sample_arrival_rates(generate_topology(32, 1000, 7), 1.0, 42)
        shards = partition_noniid(train, 32, 2, seed=3)
        policy = form_subpools(topo, 1, seed=7)
        sim = SimConfig(horizon_s=600, eval_period_s=60, seed=11)
        res = simulate(topo, policy, shards, train, sim, test)

        # independent centralized loop over the merged arrival stream
        rates = topo.rates()
        arr_rng = np.random.default_rng(np.random.SeedSequence([sim.seed, 0]))
        queues = []
        for i in range(32):
            rng_i = np.random.default_rng(np.random.SeedSequence([sim.seed, 1, i]))
            queues.append(
                {"rng": rng_i, "idx": shards[i].sample_indices, "pending": []}
            )

        def take(q, m):
            out = []
            while m > 0:
                if not q["pending"]:
                    q["pending"] = list(q["idx"][q["rng"].permutation(len(q["idx"]))])
                step = min(m, len(q["pending"]))
                out.extend(q["pending"][:step])
                del q["pending"][:step]
                m -= step
            return out

        init_seed = int(np.random.SeedSequence([sim.seed, 2]).generate_state(1)[0])
        params = init_mlp(init_seed)
        global_params = params
        probe_x, probe_y = probe_batch(test)
        acc_curve = [(0, evaluate_accuracy(global_params, test))]
        loss_curve = [(0, forward(global_params, probe_x, probe_y)[1])]
        buffer, trained = [], 0
        for t in range(1, 601):
            counts = arr_rng.poisson(rates)
            for i in range(32):
                buffer.extend(take(queues[i], int(counts[i])))
            if buffer:
                params = sgd_step(
                    params,
                    train.images[buffer].astype(np.float64),
                    train.labels[buffer],
                    sim.lr,
                )
                trained += len(buffer)
                buffer = []
            if t % 10 == 0 and trained > 0:
                global_params = fedavg([params], [trained])
                params = global_params
                trained = 0
            if t % 60 == 0 or t == 600:
                acc_curve.append((t, evaluate_accuracy(global_params, test)))
                loss_curve.append((t, forward(global_params, probe_x, probe_y)[1]))

        assert res.accuracy_curve == tuple(acc_curve)
        assert res.loss_curve == tuple(loss_curve)
        _report(
            "centralized equivalence: k=1 accuracy/loss curves bit-identical "
            "to the centralized loop at horizon 600 s"
        )


class TestFedavgAlgebra:
    def test_suite(self):
        rng = np.random.default_rng(5)

        def rand_params(seed):
            r = np.random.default_rng(seed)
            return edgepool.MlpParameters(
                W1=r.normal(0, 1, (200, 784)),
                b1=r.normal(0, 1, 200),
                W2=r.normal(0, 1, (10, 200)),
                b2=r.normal(0, 1, 10),
            )

        a, b, c = rand_params(1), rand_params(2), rand_params(3)
        single = fedavg([a], [42])
        assert all(
            np.array_equal(getattr(single, f), getattr(a, f))
            for f in ("W1", "b1", "W2", "b2")
        )
        sym_ab = fedavg([a, b], [3, 3])
        sym_ba = fedavg([b, a], [3, 3])
        assert np.array_equal(sym_ab.W1, sym_ba.W1)
        np.testing.assert_allclose(sym_ab.W1, (a.W1 + b.W1) / 2, rtol=1e-15)
        w = [1.0, 2.0, 5.0]
        scaled = fedavg([a, b, c], [7 * x for x in w])
        base = fedavg([a, b, c], w)
        assert all(
            np.array_equal(getattr(scaled, f), getattr(base, f))
            for f in ("W1", "b1", "W2", "b2")
        )
        zero = edgepool.MlpParameters(
            W1=np.zeros((200, 784)), b1=np.zeros(200),
            W2=np.zeros((10, 200)), b2=np.zeros(10),
        )
        two = edgepool.MlpParameters(
            W1=zero.W1 + 2, b1=zero.b1 + 2, W2=zero.W2 + 2, b2=zero.b2 + 2
        )
        six = edgepool.MlpParameters(
            W1=zero.W1 + 6, b1=zero.b1 + 6, W2=zero.W2 + 6, b2=zero.b2 + 6
        )
        mixed = fedavg([two, six], [3, 1])
        assert np.all(mixed.W1 == 3.0) and np.all(mixed.b2 == 3.0)
        _report("fedavg algebra: identity, symmetry, scale invariance, weighted mean")


class TestKmeansSuite:
    def test_suite(self):
        rng = np.random.default_rng(17)
        pts = rng.normal(0, 1, size=(120, 3))
        result = kmeans(pts, k=6, seed=4)
        hist = np.array(result.inertia_history)
        assert np.all(np.diff(hist) <= 1e-9)

        single = kmeans(pts, k=1, seed=0)
        np.testing.assert_allclose(single.centroids[0], pts.mean(axis=0), rtol=1e-12)

        quad = np.array([[0.0, 0.0], [0.0, 0.1], [1.0, 1.0], [1.0, 0.9]])
        best_obj, best_parts = np.inf, None
        for labels in itertools.product([0, 1], repeat=4):
            labels = np.array(labels)
            if len(np.unique(labels)) < 2:
                continue
            cents = np.stack([quad[labels == cl].mean(axis=0) for cl in (0, 1)])
            obj = float(np.sum((quad - cents[labels]) ** 2))
            if obj < best_obj:
                best_obj, best_parts = obj, frozenset(
                    frozenset(np.flatnonzero(labels == cl).tolist()) for cl in (0, 1)
                )
        assignment, centroids = kmeans(quad, k=2, seed=1)
        got = frozenset(
            frozenset(np.flatnonzero(assignment == cl).tolist()) for cl in (0, 1)
        )
        assert got == best_parts
        _report(
            "k-means suite: per-iteration monotone objective, k=1 mean centroid, "
            "4-point brute-force partition match"
        )


class TestCostModelExactness:
    def test_deterministic_closed_form_and_overage_hand_case(self):
        from edgepool import (
            ApNode,
            CostModel,
            NetworkTopology,
            ReservationPlan,
            TraceEvent,
            TrainingTrace,
            account,
            reserve,
            summarize,
        )

        rng = np.random.default_rng(0)
        train = edgepool.LabeledDataset(
            rng.uniform(0, 1, (4096, 784)).astype(np.float32),
            rng.integers(0, 10, 4096).astype(np.int64),
        )
        test = edgepool.LabeledDataset(train.images[:64], train.labels[:64])
        topo = NetworkTopology(
            aps=tuple(
                ApNode(id=i, position=(float(i), 0.0), arrival_rate=r)
                for i, r in enumerate([1.0, 2.0, 1.0, 3.0])
            ),
            area_side=10.0,
            seed=0,
        )
        shards = partition_noniid(train, 4, 2, seed=1)
        policy = form_subpools(topo, 1, seed=2)
        sim = SimConfig(
            horizon_s=40, eval_period_s=40, seed=3, deterministic_arrivals=True
        )
        res = simulate(topo, policy, shards, train, sim, test)
        model = CostModel()
        plan = reserve(topo, policy, model, sim)
        ledger = account(res.trace, plan, model)
        assert ledger.overage_ru == 0.0
        assert ledger.migration_ru == plan.migration_rate.sum() * 40
        assert ledger.processing_ru == plan.processing_rate.sum() * 40
        assert ledger.exchange_ru == plan.exchange_rate.sum() * 40
        assert ledger.training_ru == plan.training_rate.sum() * 40

        hand_plan = ReservationPlan(
            horizon_s=1,
            migration_rate=np.array([6.0]),
            processing_rate=np.array([0.0]),
            exchange_rate=np.array([0.0]),
            training_rate=np.array([0.0]),
        )
        trace = TrainingTrace(
            events=[TraceEvent(t=1, kind="migration", ap_id=0, subpool_id=0, data_units=10)]
        )
        ledger2 = account(trace, hand_plan, CostModel(overage_multiplier=2.0))
        assert summarize(ledger2)["communication_ru"] == 14.0
        assert ledger2.overage_ru == 4.0
        _report(
            "cost-model exactness: deterministic arrivals equal closed-form "
            "reservations with zero overage; 6 RU/s + 10 RU demand at x2 charges 14"
        )


class TestSubpoolCountTrend:
    def test_communication_computing_and_accuracy_trends(self, ref_sweep):
        rows = ref_sweep.rows
        assert len(rows) == len(K_GRID) * len(SEEDS)
        comm = _mean_by(rows, "k", "comm_ru_avg")
        comp = _mean_by(rows, "k", "comp_ru_avg")
        acc = _mean_by(rows, "k", "final_accuracy")

        assert comm[1] > comm[32], f"comm RU should fall with k: {comm}"
        assert comp[1] < comp[32], f"comp RU should rise with k: {comp}"
        assert acc[1] >= acc[32] + 0.02, f"accuracy gap too small: {acc}"
        # mean accuracy is non-increasing in k up to 2 points of seed noise
        for a, b in zip(K_GRID, K_GRID[1:]):
            assert acc[b] <= acc[a] + 0.02, f"accuracy inversion {a}->{b}: {acc}"
        _report(
            "trend vs number of sub-pools: mean comm RU "
            f"{comm[1]:.2f} (k=1) > {comm[32]:.2f} (k=32), comp RU "
            f"{comp[1]:.2f} < {comp[32]:.2f}, accuracy "
            f"{acc[1]:.3f} >= {acc[32]:.3f} + 0.02"
        )

    def test_reference_row_regression_pin(self, ref_sweep):
        row = next(
            r for r in ref_sweep.rows
            if r["k"] == 8 and r["seed"] == 7 and r["lambda_max"] == 1.0
        )
        assert row["final_accuracy"] == pytest.approx(REF_K8_ACCURACY, abs=0.02)
        assert row["total_ru_avg"] == pytest.approx(REF_K8_TOTAL_RU_AVG, rel=0.01)
        _report(
            "reference run pin: (k=8, lambda_max=1, seed=7) accuracy "
            f"{row['final_accuracy']:.4f}, total {row['total_ru_avg']:.2f} RU/s"
        )


class TestArrivalRateTrend:
    def test_ru_and_accuracy_versus_lambda(self, rate_sweep_rows):
        total = _mean_by(rate_sweep_rows, "lambda_max", "total_ru_avg")
        acc = _mean_by(rate_sweep_rows, "lambda_max", "final_accuracy")
        lams = [0.25, 0.5, 1.0]
        for lo, hi in zip(lams, lams[1:]):
            assert total[hi] > total[lo], f"total RU not increasing: {total}"
        inversions = [
            acc[lo] - acc[hi] for lo, hi in zip(lams, lams[1:]) if acc[hi] < acc[lo]
        ]
        assert len(inversions) <= 1
        assert all(gap <= 0.01 for gap in inversions), f"accuracy vs lambda: {acc}"
        _report(
            "trend vs arrival rate at k=8: mean total RU "
            f"{total[0.25]:.1f} < {total[0.5]:.1f} < {total[1.0]:.1f}; accuracy "
            f"{acc[0.25]:.3f} -> {acc[0.5]:.3f} -> {acc[1.0]:.3f}"
        )


class TestGprCorrectness:
    def test_interpolation_closed_form_and_loo(self, ref_config, ref_sweep):
        from edgepool.experiment import observations_from_rows

        zero_noise = GprHyperparams(noise_variance=0.0)
        rng = np.random.default_rng(3)
        obs = []
        for _ in range(12):
            obs.append(
                PolicyObservation(
                    k=int(rng.integers(1, 33)),
                    lambda_max=1.0,
                    rate_mean=float(rng.uniform(0.4, 0.6)),
                    rate_std=float(rng.uniform(0.2, 0.3)),
                    accuracy=float(rng.uniform(0.5, 0.95)),
                    avg_ru_per_s=float(rng.uniform(10, 100)),
                )
            )
        model = gpr_fit(obs, "accuracy", zero_noise)
        for o in obs:
            mean, _ = gpr_predict(model, o.feature_vector())
            assert mean == pytest.approx(o.accuracy, abs=1e-8)

        y = 0.7
        one = PolicyObservation(2, 1.0, 0.5, 0.2, accuracy=y, avg_ru_per_s=1.0)
        point = gpr_fit([one], "accuracy", GprHyperparams(noise_variance=0.0, prior_mean=0.0))
        for d in (0.0, 0.7, 1.3, 3.0):
            mean, var = gpr_predict(
                point, one.feature_vector() + np.array([d, 0, 0, 0])
            )
            assert mean == pytest.approx(y * math.exp(-d * d / 2), abs=1e-10)
            assert var == pytest.approx(1.0 - math.exp(-d * d), abs=1e-10)

        sweep_obs = observations_from_rows(ref_sweep.rows, ref_config)
        loo = loo_mean_absolute_error(sweep_obs, "accuracy")
        assert loo <= 0.05, f"LOO MAE {loo}"
        _report(
            "GPR correctness: zero-noise interpolation to 1e-8, one-point "
            f"closed form to 1e-10, reference-sweep LOO MAE {loo:.4f} <= 0.05"
        )


class TestSelectionClosedLoop:
    def test_top_candidate_resimulates_above_floor(self, ref_config, ref_sweep):
        from pathlib import Path

        report = fit_and_select(
            ref_config,
            Path(ref_config.out_dir) / "summary.csv",
            required_accuracy=0.85,
        )
        assert report.candidates, "no candidate met the 0.85 requirement"
        top = report.candidates[0]
        fresh_accs = [
            run_single(ref_config, top.k, 1.0, seed).final_accuracy
            for seed in (101, 103, 105)
        ]
        mean_acc = float(np.mean(fresh_accs))
        assert mean_acc >= 0.82, f"k={top.k} re-simulated at {fresh_accs}"
        _report(
            f"selection closed loop: top candidate k={top.k} (predicted "
            f"{top.predicted_accuracy:.3f}) re-simulated at {mean_acc:.3f} >= 0.82"
        )


class TestDeterminism:
    def test_identical_run_rows_bitwise(self, ref_data):
        import dataclasses

        config = ExperimentConfig(
            lambda_max=[1.0],
            k=[4],
            horizon_s=60,
            seeds=[7],
            train_images=str(ref_data["train_images"]),
            train_labels=str(ref_data["train_labels"]),
            test_images=str(ref_data["test_images"]),
            test_labels=str(ref_data["test_labels"]),
            n_aps=32,
            eval_period_s=30,
        )
        from edgepool.experiment import SUMMARY_COLUMNS, _format_value

        a = run_single(config, 4, 1.0, 7)
        b = run_single(config, 4, 1.0, 7)
        row_a = ",".join(_format_value(a.summary_row()[c]) for c in SUMMARY_COLUMNS)
        row_b = ",".join(_format_value(b.summary_row()[c]) for c in SUMMARY_COLUMNS)
        assert row_a == row_b
        _report("determinism: repeated run yields a bitwise-identical summary row")
