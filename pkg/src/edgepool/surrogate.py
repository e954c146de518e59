"""Gaussian-process surrogates over pooling policies, plus candidate selection.

Exact GP regression with a squared-exponential kernel maps policy/workload
features (number of sub-pools, peak rate, mean and spread of per-AP rates)
to observed accuracy or average resource consumption.  A fitted pair of
surrogates ranks the candidate pool counts that are predicted to meet an
accuracy requirement, cheapest first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FEATURE_NAMES = ("k", "lambda_max", "rate_mean", "rate_std")


@dataclass(frozen=True)
class PolicyObservation:
    """One completed run: policy/workload features and its measured outcomes."""

    k: int
    lambda_max: float
    rate_mean: float
    rate_std: float
    accuracy: float
    avg_ru_per_s: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.avg_ru_per_s < 0:
            raise ValueError(f"avg_ru_per_s {self.avg_ru_per_s} negative")

    def feature_vector(self) -> np.ndarray:
        return np.array([self.k, self.lambda_max, self.rate_mean, self.rate_std])


@dataclass(frozen=True)
class GprHyperparams:
    """Fixed kernel settings; no marginal-likelihood optimization here.

    ``prior_mean=None`` uses the mean of the training targets.
    """

    length_scale: float | tuple[float, ...] = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 1e-4
    prior_mean: float | None = None

    def length_scales(self, dim: int) -> np.ndarray:
        ls = np.broadcast_to(np.asarray(self.length_scale, dtype=float), (dim,))
        if np.any(ls <= 0):
            raise ValueError("length scales must be > 0")
        return ls.copy()


class GprError(ValueError):
    """Raised when the kernel matrix cannot be factorized even with jitter."""


def _se_kernel(a, b, length_scales, signal_variance):
    da = a[:, None, :] / length_scales
    db = b[None, :, :] / length_scales
    sq = np.sum((da - db) ** 2, axis=2)
    return signal_variance * np.exp(-0.5 * sq)


@dataclass
class GprSurrogate:
    """Exact GP posterior over one target, with standardized inputs."""

    target: str
    hyper: GprHyperparams
    x_mean: np.ndarray
    x_scale: np.ndarray
    z_train: np.ndarray  # standardized inputs, (n, d)
    prior_mean: float
    chol: np.ndarray  # lower Cholesky factor of K + (noise + jitter) I
    alpha: np.ndarray  # (K + noise I)^{-1} (y - prior_mean)
    jitter: float

    @property
    def n_train(self) -> int:
        return self.z_train.shape[0]

    @property
    def dim(self) -> int:
        return self.z_train.shape[1]

    def standardize(self, features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if f.shape[1] != self.dim:
            raise ValueError(f"feature dim {f.shape[1]} != training dim {self.dim}")
        return (f - self.x_mean) / self.x_scale

    def report(self, loo_mae: float | None = None) -> str:
        ls = ", ".join(
            f"{v:g}" for v in self.hyper.length_scales(self.dim)
        )
        lines = [
            f"GP surrogate for {self.target}",
            f"  training points: {self.n_train}",
            f"  kernel: squared-exponential, length scales [{ls}], "
            f"signal variance {self.hyper.signal_variance:g}, "
            f"noise variance {self.hyper.noise_variance:g}",
            f"  prior mean: {self.prior_mean:.6g}",
            f"  jitter applied: {self.jitter:g}",
        ]
        if loo_mae is not None:
            lines.append(f"  leave-one-out MAE: {loo_mae:.6g}")
        return "\n".join(lines)


def _fit_arrays(x, y, hyper: GprHyperparams, target: str) -> GprSurrogate:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("need at least one observation")
    if np.any(~np.isfinite(y)):
        raise ValueError("targets contain NaN or inf")

    x_mean = x.mean(axis=0)
    x_scale = x.std(axis=0)
    x_scale[x_scale == 0] = 1.0  # constant feature: leave it centered at zero
    z = (x - x_mean) / x_scale

    mu = float(y.mean()) if hyper.prior_mean is None else float(hyper.prior_mean)
    ls = hyper.length_scales(x.shape[1])
    kmat = _se_kernel(z, z, ls, hyper.signal_variance)

    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(
                kmat + (hyper.noise_variance + jitter) * np.eye(len(y))
            )
            break
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = 1e-8
            elif jitter >= 1e-2:
                raise GprError(
                    f"kernel matrix not positive definite after jitter {jitter:g}"
                ) from None
            else:
                jitter *= 2.0
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y - mu))
    return GprSurrogate(
        target=target,
        hyper=hyper,
        x_mean=x_mean,
        x_scale=x_scale,
        z_train=z,
        prior_mean=mu,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
    )


def gpr_fit(
    observations: list[PolicyObservation],
    target: str = "accuracy",
    hyper: GprHyperparams = GprHyperparams(),
) -> GprSurrogate:
    """Fit an exact GP to the observations.

    ``target`` selects the regression target: "accuracy" or "cost"
    (average RU per second).  Inputs are z-scored with training statistics;
    the prior mean defaults to the training-target mean.  Factorization
    failures fail over to jitter from 1e-8 doubling up to 1e-2.
    """
    if target not in ("accuracy", "cost"):
        raise ValueError(f"target must be 'accuracy' or 'cost', got {target!r}")
    if len(observations) < 1:
        raise ValueError("need at least one observation")
    x = np.stack([o.feature_vector() for o in observations])
    y = np.array(
        [o.accuracy if target == "accuracy" else o.avg_ru_per_s for o in observations]
    )
    return _fit_arrays(x, y, hyper, target)


def gpr_predict(surrogate: GprSurrogate, features):
    """Posterior mean and variance at the query features.

    Accepts one (d,) vector or an (m, d) batch; returns scalars for a single
    query and (m,) arrays for a batch.  Variance is the latent-function
    variance, clipped at zero.
    """
    single = np.asarray(features).ndim == 1
    zq = surrogate.standardize(features)
    ls = surrogate.hyper.length_scales(surrogate.dim)
    kstar = _se_kernel(surrogate.z_train, zq, ls, surrogate.hyper.signal_variance)
    mean = surrogate.prior_mean + kstar.T @ surrogate.alpha
    v = np.linalg.solve(surrogate.chol, kstar)
    var = surrogate.hyper.signal_variance - np.sum(v * v, axis=0)
    var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def loo_mean_absolute_error(
    observations: list[PolicyObservation],
    target: str = "accuracy",
    hyper: GprHyperparams = GprHyperparams(),
) -> float:
    """Leave-one-out MAE of the surrogate over the observation set."""
    if len(observations) < 2:
        raise ValueError("leave-one-out needs at least two observations")
    errors = []
    for i, held_out in enumerate(observations):
        rest = observations[:i] + observations[i + 1 :]
        model = gpr_fit(rest, target=target, hyper=hyper)
        pred, _ = gpr_predict(model, held_out.feature_vector())
        truth = held_out.accuracy if target == "accuracy" else held_out.avg_ru_per_s
        errors.append(abs(pred - truth))
    return float(np.mean(errors))


@dataclass(frozen=True)
class PolicyCandidate:
    k: int
    predicted_accuracy: float
    predicted_cost: float
    accuracy_variance: float
    cost_variance: float


def select_policy(
    acc_surrogate: GprSurrogate,
    cost_surrogate: GprSurrogate,
    candidate_ks: list[int],
    workload_features: tuple[float, float, float],
    required_accuracy: float,
) -> list[PolicyCandidate]:
    """Rank candidate pool counts that are predicted to meet the requirement.

    ``workload_features`` is (lambda_max, rate_mean, rate_std).  Candidates
    whose predicted accuracy reaches ``required_accuracy`` are returned
    sorted by ascending predicted cost; cost ties prefer the larger k, which
    keeps more data local.  An empty list means no candidate qualifies.
    """
    lam, rmean, rstd = workload_features
    out = []
    for k in candidate_ks:
        feat = np.array([k, lam, rmean, rstd], dtype=np.float64)
        acc, acc_var = gpr_predict(acc_surrogate, feat)
        cost, cost_var = gpr_predict(cost_surrogate, feat)
        if acc >= required_accuracy:
            out.append(
                PolicyCandidate(
                    k=int(k),
                    predicted_accuracy=acc,
                    predicted_cost=cost,
                    accuracy_variance=acc_var,
                    cost_variance=cost_var,
                )
            )
    out.sort(key=lambda c: (c.predicted_cost, -c.k))
    return out
