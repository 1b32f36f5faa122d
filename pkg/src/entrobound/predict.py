"""Causal predictors and their innovation streams.

Two families are provided: optimal linear predictors fit from
autocovariances (scalar Levinson-Durbin and the multichannel Whittle
recursion) and the conditional-mean m-step predictor of a known model.
Deliberately suboptimal baselines (zero, truncated) make the strict side
of the prediction bounds observable.

Error covariances are tail-averaged (last half of every path by default)
so that reported numbers approximate the asymptotic, stationary-regime
quantities the bounds refer to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateProcessError, DimensionError, HorizonError
from .procgen import ProcessModel, SampleSet
from .spectral import AutocovSequence

VARIANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class LevinsonResult:
    """Levinson-Durbin output: reflection coefficients, AR coefficients of
    the final order, and the innovation-variance sequence v_0..v_order."""

    reflection: np.ndarray
    ar_coeffs: np.ndarray
    variances: np.ndarray


def levinson(autocov: AutocovSequence, order: int) -> LevinsonResult:
    """Solve the scalar Yule-Walker system by Levinson-Durbin.

    ``v_j`` is the optimal 1-step error variance at order j; it is
    nonincreasing for any PSD input.  Collapse below 1e-14 means the
    process is numerically perfectly predictable.
    """
    r = autocov.scalar()
    if order >= len(r):
        raise ValueError(f"order {order} needs {order + 1} lags, got {len(r)}")
    v = float(r[0])
    if v < VARIANCE_FLOOR:
        raise DegenerateProcessError("R(0) below variance floor")
    a = np.zeros(0)
    refl = np.zeros(order)
    variances = np.empty(order + 1)
    variances[0] = v
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a, r[i - 1:0:-1]) if i > 1 else r[1]
        k = acc / v
        refl[i - 1] = k
        a = np.concatenate([a - k * a[::-1], [k]])
        v *= 1.0 - k * k
        variances[i] = v
        if v < VARIANCE_FLOOR:
            raise DegenerateProcessError(
                f"innovation variance collapsed at order {i} (v = {v:.3e})"
            )
    return LevinsonResult(reflection=refl, ar_coeffs=a, variances=variances)


@dataclass(frozen=True)
class MultichannelLevinsonResult:
    """Whittle recursion output: VAR coefficient blocks and the forward
    innovation covariance, plus det V per order for monotonicity checks."""

    ar_coeffs: np.ndarray
    innovation_cov: np.ndarray
    det_sequence: np.ndarray


def multichannel_levinson(autocov: AutocovSequence, order: int) -> MultichannelLevinsonResult:
    """Block Yule-Walker solve by the Whittle forward-backward recursion."""
    if order > autocov.max_lag:
        raise ValueError(f"order {order} needs {order + 1} lag matrices")
    n = autocov.dim
    # internal convention Gamma_k = E[x_t x_{t-k}^T] = R(k)^T
    G = [autocov.values[k].T for k in range(order + 1)]
    ef = G[0].copy()
    eb = G[0].copy()
    A: list[np.ndarray] = []
    B: list[np.ndarray] = []
    dets = np.empty(order + 1)
    dets[0] = np.linalg.det(ef)
    if dets[0] < VARIANCE_FLOOR:
        raise DegenerateProcessError("R(0) is singular")
    for m in range(1, order + 1):
        delta = G[m].copy()
        for i, a_i in enumerate(A, start=1):
            delta -= a_i @ G[m - i]
        kf = delta @ np.linalg.inv(eb)
        kb = delta.T @ np.linalg.inv(ef)
        A_new = [A[i] - kf @ B[m - 2 - i] for i in range(m - 1)] + [kf]
        B_new = [B[i] - kb @ A[m - 2 - i] for i in range(m - 1)] + [kb]
        A, B = A_new, B_new
        ef = ef - kf @ delta.T
        eb = eb - kb @ delta
        ef = 0.5 * (ef + ef.T)
        eb = 0.5 * (eb + eb.T)
        dets[m] = np.linalg.det(ef)
        if dets[m] < VARIANCE_FLOOR:
            raise DegenerateProcessError(
                f"innovation covariance became singular at order {m}"
            )
    coeffs = np.stack(A) if A else np.zeros((0, n, n))
    return MultichannelLevinsonResult(ar_coeffs=coeffs, innovation_cov=ef,
                                      det_sequence=dets)


@dataclass(frozen=True)
class Predictor:
    """A causal map from past samples to a prediction of x_k.

    ``kind``: zero | levinson | truncated | multichannel_levinson |
    model_mstep.  FIR kinds predict x_k from the ``order`` samples ending
    at index k - horizon; model_mstep iterates the conditional mean of a
    known model ``horizon`` steps.  Strict causality (index <= k - horizon)
    holds for every kind.
    """

    kind: str
    horizon: int = 1
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    model: ProcessModel | None = None

    @property
    def order(self) -> int:
        if self.kind == "model_mstep":
            return self.model.p + self.model.q
        return self.coefficients.shape[0]


def zero_predictor(horizon: int = 1) -> Predictor:
    return Predictor(kind="zero", horizon=horizon)


def fit_levinson_predictor(autocov: AutocovSequence, order: int,
                           kind: str = "levinson") -> Predictor:
    """Order-``order`` optimal linear 1-step predictor (scalar).

    Pass kind="truncated" to label a deliberately low-order fit."""
    res = levinson(autocov, order)
    return Predictor(kind=kind, horizon=1, coefficients=res.ar_coeffs)


def fit_multichannel_predictor(autocov: AutocovSequence, order: int) -> Predictor:
    res = multichannel_levinson(autocov, order)
    return Predictor(kind="multichannel_levinson", horizon=1,
                     coefficients=res.ar_coeffs)


def model_mstep_predictor(model: ProcessModel, m: int) -> Predictor:
    if m < 1:
        raise HorizonError("horizon must be >= 1")
    if model.q > 0 and not model.is_invertible:
        raise ValueError("model MA part is not invertible; conditional-mean "
                         "innovation recovery is ill-posed")
    return Predictor(kind="model_mstep", horizon=m, model=model)


@dataclass(frozen=True)
class PredictorReport:
    """Innovations and tail-averaged error covariance of one predictor run."""

    predictor_kind: str
    horizon: int
    innovations: SampleSet
    error_cov: np.ndarray
    det_error_cov: float
    per_k_variance: np.ndarray
    achieved_se: float
    tail_fraction: float = 0.5

    @property
    def dim(self) -> int:
        return self.error_cov.shape[0]

    def to_dict(self) -> dict:
        return {
            "predictor": self.predictor_kind,
            "m": self.horizon,
            "error_cov": self.error_cov.tolist(),
            "det_error_cov": self.det_error_cov,
            "achieved_se": self.achieved_se,
            "n_paths": self.innovations.paths,
            "tail_fraction": self.tail_fraction,
        }


def _shift(x: np.ndarray, s: int) -> np.ndarray:
    """x delayed by s along the time axis, zero-padded at the start."""
    if s == 0:
        return x
    out = np.zeros_like(x)
    out[:, s:, :] = x[:, : x.shape[1] - s, :]
    return out


def _fir_predictions(pred: Predictor, data: np.ndarray) -> np.ndarray:
    coeffs = pred.coefficients
    m = pred.horizon
    if coeffs.ndim == 1:  # scalar filter
        b = np.zeros(coeffs.shape[0] + m)
        b[m:] = coeffs
        return lfilter(b, [1.0], data[:, :, 0], axis=1)[:, :, None]
    pred_x = np.zeros_like(data)
    for i in range(coeffs.shape[0]):
        pred_x += _shift(data, m + i) @ coeffs[i].T
    return pred_x


def _recover_innovations(model: ProcessModel, data: np.ndarray) -> np.ndarray:
    """Whitening recursion w_k = x_k - sum a_i x_{k-i} - sum b_j w_{k-j}."""
    P, T, n = data.shape
    w = data.copy()
    for i, a in enumerate(model.ar_coeffs, start=1):
        w -= _shift(data, i) @ a.T
    if model.q == 0:
        return w
    ar_part = w.copy()
    w = np.zeros_like(data)
    for k in range(T):
        acc = ar_part[:, k, :].copy()
        for j in range(1, min(k, model.q) + 1):
            acc -= w[:, k - j, :] @ model.ma_coeffs[j - 1].T
        w[:, k, :] = acc
    return w


def _model_mstep_predictions(model: ProcessModel, data: np.ndarray, m: int) -> np.ndarray:
    """Iterated conditional mean E[x_k | x_{0..k-m}] under the model."""
    w_hat = _recover_innovations(model, data)
    preds = []
    for i in range(1, m + 1):
        f_i = np.zeros_like(data)
        for l, a in enumerate(model.ar_coeffs, start=1):
            src = data if l >= i else preds[i - l - 1]
            f_i += _shift(src, l) @ a.T
        for j, b in enumerate(model.ma_coeffs, start=1):
            if j >= i:
                f_i += _shift(w_hat, j) @ b.T
        preds.append(f_i)
    return preds[m - 1]


def run_predictor(pred: Predictor, samples: SampleSet,
                  tail_fraction: float = 0.5) -> PredictorReport:
    """Apply a predictor causally and summarize its errors.

    Innovations at index k use only samples with index <= k - horizon.
    The error covariance averages the last ``tail_fraction`` of every path
    and then across paths, approximating the liminf the bounds refer to.
    """
    data = samples.data
    P, T, n = data.shape
    if pred.horizon + pred.order > T / 2:
        raise HorizonError(
            f"horizon {pred.horizon} + order {pred.order} exceeds length/2 = {T / 2:g}"
        )
    if pred.kind == "zero":
        pred_x = np.zeros_like(data)
        start = pred.horizon
    elif pred.kind == "model_mstep":
        if pred.model.dim != n:
            raise DimensionError("model dimension does not match samples")
        pred_x = _model_mstep_predictions(pred.model, data, pred.horizon)
        start = pred.model.p + pred.model.q + pred.horizon
    else:
        if pred.coefficients.ndim == 1 and n != 1:
            raise DimensionError("scalar predictor applied to a vector process")
        pred_x = _fir_predictions(pred, data)
        start = pred.order + pred.horizon - 1
    innov = data[:, start:, :] - pred_x[:, start:, :]
    return summarize_stream(
        SampleSet(data=innov, seed=samples.seed, burn_in=samples.burn_in),
        kind=pred.kind, horizon=pred.horizon, tail_fraction=tail_fraction)


def summarize_stream(stream: SampleSet, kind: str = "stream", horizon: int = 1,
                     tail_fraction: float = 0.5) -> PredictorReport:
    """Tail-averaged (co)variance summary of an error/innovation stream.

    Also used for the realized g-stream of recursive systems, whose
    covariance the recursive bound constrains."""
    innov = stream.data
    P, T_i, n = innov.shape
    tail = innov[:, int(np.floor(T_i * (1.0 - tail_fraction))):, :]
    error_cov = np.einsum("pti,ptj->ij", tail, tail) / (tail.shape[0] * tail.shape[1])
    error_cov = 0.5 * (error_cov + error_cov.T)
    per_k = np.einsum("pti,pti->t", innov, innov) / (P * n)
    return PredictorReport(
        predictor_kind=kind,
        horizon=horizon,
        innovations=stream,
        error_cov=error_cov,
        det_error_cov=float(np.linalg.det(error_cov)),
        per_k_variance=per_k,
        achieved_se=_achieved_se(tail),
        tail_fraction=tail_fraction,
    )


def _achieved_se(tail: np.ndarray) -> float:
    """Monte Carlo SE of the tail-averaged det error covariance.

    Uses the spread of per-path statistics when several paths exist,
    falling back to time blocks for single-path runs (innovations of a
    good predictor are near-white, so blocks are near-independent).
    """
    P, T, n = tail.shape
    if P >= 8:
        chunks = [tail[p] for p in range(P)]
    else:
        n_blocks = 8
        edges = np.linspace(0, T, n_blocks + 1, dtype=int)
        chunks = [tail[:, lo:hi, :].reshape(-1, n) for lo, hi in zip(edges, edges[1:])]
    vals = []
    for c in chunks:
        cov = c.reshape(-1, n).T @ c.reshape(-1, n) / c.reshape(-1, n).shape[0]
        vals.append(np.linalg.det(cov))
    vals = np.asarray(vals)
    return float(np.std(vals, ddof=1) / np.sqrt(len(vals)))


def mstep_predict(model: ProcessModel, samples: SampleSet, m: int,
                  tail_fraction: float = 0.5) -> PredictorReport:
    """Known-model m-step prediction (exact conditional mean for linear
    Gaussian models)."""
    if m >= samples.length / 2:
        raise HorizonError(f"m = {m} must be < length/2 = {samples.length / 2:g}")
    return run_predictor(model_mstep_predictor(model, m), samples,
                         tail_fraction=tail_fraction)
