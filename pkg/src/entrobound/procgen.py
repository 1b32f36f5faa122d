"""Stochastic process models and reproducible simulation.

Conventions used throughout the package:

* An ARMA/VARMA model is
  ``x_k = sum_i a_i x_{k-i} + w_k + sum_j b_j w_{k-j}``
  with ``a_i``, ``b_j`` equal to ``n x n`` matrices (scalars are 1x1).
* Autocovariances follow ``R(k) = E[x_i x_{i+k}^T]`` so that
  ``R(-k) = R(k)^T``.
* All processes are zero-mean.  Nonzero-mean models are out of scope and
  rejected at the configuration layer.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov
from scipy.signal import lfilter

from .errors import DistributionError, DivergenceError, StabilityError
from .spectral import AutocovSequence, SpectrumGrid

ROOT_MARGIN = 1e-8
OVERFLOW_GUARD = 1e12

INNOVATION_FAMILIES = ("gaussian", "laplace", "uniform", "student_t")


def _as_coeff_list(coeffs, dim: int) -> list[np.ndarray]:
    out = []
    for c in coeffs:
        m = np.atleast_2d(np.asarray(c, dtype=float))
        if m.shape != (dim, dim):
            raise ValueError(f"coefficient shape {m.shape} != ({dim}, {dim})")
        out.append(m)
    return out


def _companion(coeffs: list[np.ndarray], dim: int) -> np.ndarray:
    """Companion matrix of I - c_1 z - ... - c_p z^p (block form)."""
    p = len(coeffs)
    if p == 0:
        return np.zeros((dim, dim))
    top = np.hstack(coeffs)
    comp = np.zeros((dim * p, dim * p))
    comp[:dim, :] = top
    if p > 1:
        comp[dim:, :-dim] = np.eye(dim * (p - 1))
    return comp


def _spectral_radius(coeffs: list[np.ndarray], dim: int) -> float:
    if not coeffs:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(_companion(coeffs, dim)))))


@dataclass(frozen=True)
class InnovationSpec:
    """Innovation (driving noise) distribution, rescaled to an exact variance.

    ``family`` is one of gaussian / laplace / uniform / student_t. Every
    family is affinely rescaled so the population variance equals
    ``variance`` (scalar case) or ``cross_covariance`` (vector case); for
    non-Gaussian families the vector case applies a Cholesky mix of iid
    standardized draws, which fixes the covariance but not the marginals.
    """

    family: str = "gaussian"
    variance: float = 1.0
    nu: float | None = None
    cross_covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in INNOVATION_FAMILIES:
            raise DistributionError(f"unknown innovation family {self.family!r}")
        if self.family == "student_t":
            if self.nu is None or self.nu <= 2:
                raise DistributionError(
                    f"student_t requires nu > 2 (got {self.nu}): variance is infinite"
                )
        if self.variance <= 0:
            raise DistributionError("innovation variance must be > 0")
        if self.cross_covariance is not None:
            cov = np.atleast_2d(np.asarray(self.cross_covariance, dtype=float))
            if cov.shape[0] != cov.shape[1]:
                raise DistributionError("cross_covariance must be square")
            if not np.allclose(cov, cov.T, atol=1e-10):
                raise DistributionError("cross_covariance must be symmetric")
            if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
                raise DistributionError("cross_covariance must be PSD (tol 1e-10)")
            object.__setattr__(self, "cross_covariance", cov)

    @property
    def dim(self) -> int:
        return 1 if self.cross_covariance is None else self.cross_covariance.shape[0]

    def covariance(self) -> np.ndarray:
        if self.cross_covariance is not None:
            return self.cross_covariance.copy()
        return np.array([[self.variance]])

    def _standardized(self, rng: np.random.Generator, size) -> np.ndarray:
        """Zero-mean unit-variance draws of the requested family."""
        if self.family == "gaussian":
            return rng.standard_normal(size)
        if self.family == "laplace":
            return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
        if self.family == "uniform":
            half = math.sqrt(3.0)
            return rng.uniform(-half, half, size)
        # student_t, nu > 2
        return rng.standard_t(self.nu, size) * math.sqrt((self.nu - 2.0) / self.nu)

    def sample(self, rng: np.random.Generator, length: int) -> np.ndarray:
        """Draw ``length`` innovation vectors, shape (length, dim)."""
        z = self._standardized(rng, (length, self.dim))
        if self.cross_covariance is None:
            return z * math.sqrt(self.variance)
        # PSD but possibly singular: use eigen square root
        w, v = np.linalg.eigh(self.cross_covariance)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        return z @ root.T

    def to_dict(self) -> dict:
        d = {"family": self.family, "variance": self.variance}
        if self.nu is not None:
            d["nu"] = self.nu
        if self.cross_covariance is not None:
            d["cross_covariance"] = self.cross_covariance.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InnovationSpec":
        cov = d.get("cross_covariance")
        return cls(
            family=d.get("family", "gaussian"),
            variance=float(d.get("variance", 1.0)),
            nu=d.get("nu"),
            cross_covariance=None if cov is None else np.asarray(cov, dtype=float),
        )


@dataclass(frozen=True)
class ProcessModel:
    """Stable (V)ARMA generator of the process under study.

    Raises StabilityError at construction if any AR characteristic root is
    within ``1 + 1e-8`` of the unit circle; near-nonstationary models break
    the asymptotic-variance estimates and are rejected rather than
    simulated.  MA invertibility is *not* required here (non-minimum-phase
    models are legal simulation targets); whitening code checks
    ``is_invertible`` itself.
    """

    ar_coeffs: tuple = ()
    ma_coeffs: tuple = ()
    innovation: InnovationSpec = field(default_factory=InnovationSpec)
    name: str = ""

    def __post_init__(self):
        dim = self.innovation.dim
        ar = _as_coeff_list(self.ar_coeffs, dim)
        ma = _as_coeff_list(self.ma_coeffs, dim)
        object.__setattr__(self, "ar_coeffs", tuple(a.copy() for a in ar))
        object.__setattr__(self, "ma_coeffs", tuple(b.copy() for b in ma))
        rho = _spectral_radius(ar, dim)
        if rho > 1.0 / (1.0 + ROOT_MARGIN):
            raise StabilityError(
                f"AR spectral radius {rho:.12f} violates the stability margin "
                f"(characteristic roots must lie outside the unit disc by {ROOT_MARGIN})"
            )

    @property
    def dim(self) -> int:
        return self.innovation.dim

    @property
    def p(self) -> int:
        return len(self.ar_coeffs)

    @property
    def q(self) -> int:
        return len(self.ma_coeffs)

    @property
    def is_invertible(self) -> bool:
        rho = _spectral_radius([-b for b in self.ma_coeffs], self.dim)
        return rho < 1.0 / (1.0 + ROOT_MARGIN)

    def default_burn_in(self) -> int:
        # 10 * (p + q + embedding depth): every bound statement is a
        # k -> infinity limit, so start well inside the stationary regime.
        return 10 * (self.p + self.q + 16)

    def ma_weights(self, count: int) -> np.ndarray:
        """First ``count`` MA(infinity) weights psi_0..psi_{count-1}."""
        n = self.dim
        psi = np.zeros((count, n, n))
        for j in range(count):
            acc = np.eye(n) if j == 0 else np.zeros((n, n))
            if 1 <= j <= self.q:
                acc = acc + self.ma_coeffs[j - 1]
            for i in range(1, min(j, self.p) + 1):
                acc = acc + self.ar_coeffs[i - 1] @ psi[j - i]
            psi[j] = acc
        return psi

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ar": [a.tolist() for a in self.ar_coeffs],
            "ma": [b.tolist() for b in self.ma_coeffs],
            "innovation": self.innovation.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessModel":
        return cls(
            ar_coeffs=tuple(np.asarray(a, dtype=float) for a in d.get("ar", [])),
            ma_coeffs=tuple(np.asarray(b, dtype=float) for b in d.get("ma", [])),
            innovation=InnovationSpec.from_dict(d.get("innovation", {})),
            name=d.get("name", ""),
        )


@dataclass(frozen=True)
class SampleSet:
    """Simulated sample paths, shape (paths, length, dim).

    Bit-for-bit reproducible: identical (model, length, paths, seed)
    produce identical data regardless of worker count, because every path
    uses its own counter-based substream keyed by ``seed XOR path``.
    """

    data: np.ndarray
    seed: int
    burn_in: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError("SampleSet data must be (paths, length, dim)")
        if not np.all(np.isfinite(data)):
            raise ValueError("SampleSet data contains NaN/Inf")
        object.__setattr__(self, "data", data)

    @property
    def paths(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def pooled(self) -> np.ndarray:
        """All samples as one (paths*length, dim) point cloud."""
        return self.data.reshape(-1, self.dim)

    def to_csv(self, path) -> None:
        """CSV with header ``path,k,x0,...,x{n-1}``."""
        p, t, n = self.data.shape
        idx_path = np.repeat(np.arange(p), t)
        idx_k = np.tile(np.arange(t), p)
        table = np.column_stack([idx_path, idx_k, self.data.reshape(p * t, n)])
        header = "path,k," + ",".join(f"x{i}" for i in range(n))
        fmt = ["%d", "%d"] + ["%.17g"] * n
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)

    @classmethod
    def from_csv(cls, path, seed: int = 0, burn_in: int = 0) -> "SampleSet":
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        table = np.atleast_2d(table)
        paths = int(table[:, 0].max()) + 1
        length = int(table[:, 1].max()) + 1
        dim = table.shape[1] - 2
        data = table[:, 2:].reshape(paths, length, dim)
        return cls(data=data, seed=seed, burn_in=burn_in)


_G_FORMS = ("difference", "identity", "second_difference")
_F_FORMS = ("zero", "linear", "saturated_linear")


@dataclass(frozen=True)
class RecursiveSpec:
    """Recursive system g_{k+1}(x_{0..k+1}) = f_k(x_{0..k}) + n_k.

    ``g_form`` selects the left-hand side (difference x_{k+1}-x_k, identity
    x_{k+1}, or second difference x_{k+1}-2x_k+x_{k-1}); ``f_form`` selects
    the feedback term f(x_k) from a small catalog.  Each pair is solvable
    for x_{k+1} given the history and the noise draw.
    """

    g_form: str = "difference"
    f_form: str = "zero"
    gain: np.ndarray | None = None
    cap: float | None = None
    noise: InnovationSpec = field(default_factory=InnovationSpec)
    name: str = ""

    def __post_init__(self):
        if self.g_form not in _G_FORMS:
            raise ValueError(f"unknown g_form {self.g_form!r}")
        if self.f_form not in _F_FORMS:
            raise ValueError(f"unknown f_form {self.f_form!r}")
        if self.f_form != "zero":
            if self.gain is None:
                raise ValueError(f"f_form {self.f_form!r} requires a gain matrix")
            k = np.atleast_2d(np.asarray(self.gain, dtype=float))
            if k.shape != (self.noise.dim, self.noise.dim):
                raise ValueError("gain must be dim x dim")
            object.__setattr__(self, "gain", k)
        if self.f_form == "saturated_linear":
            if self.cap is None or self.cap < 0:
                raise ValueError("saturated_linear requires cap >= 0")

    @property
    def dim(self) -> int:
        return self.noise.dim

    def feedback(self, x: np.ndarray) -> np.ndarray:
        """f(x_k) for a (paths, dim) batch of current states."""
        if self.f_form == "zero":
            return np.zeros_like(x)
        fx = x @ self.gain.T
        if self.f_form == "saturated_linear":
            fx = np.clip(fx, -self.cap, self.cap)
        return fx

    def to_dict(self) -> dict:
        d = {"name": self.name, "g_form": self.g_form, "f_form": self.f_form,
             "noise": self.noise.to_dict()}
        if self.gain is not None:
            d["gain"] = self.gain.tolist()
        if self.cap is not None:
            d["cap"] = self.cap
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RecursiveSpec":
        gain = d.get("gain")
        return cls(
            g_form=d.get("g_form", "difference"),
            f_form=d.get("f_form", "zero"),
            gain=None if gain is None else np.asarray(gain, dtype=float),
            cap=d.get("cap"),
            noise=InnovationSpec.from_dict(d.get("noise", {})),
            name=d.get("name", ""),
        )


def _path_rng(seed: int, path: int) -> np.random.Generator:
    # Counter-based substream per path: scheduling cannot change output.
    key = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(path)
    return np.random.Generator(np.random.Philox(key=int(key)))


def _simulate_paths(model: ProcessModel, path_ids, total: int, seed: int) -> np.ndarray:
    """Simulate len(path_ids) paths of ``total`` steps from zero state."""
    n = model.dim
    w = np.stack([model.innovation.sample(_path_rng(seed, path_id), total)
                  for path_id in path_ids])
    if n == 1:
        b = np.concatenate([[1.0], [bm[0, 0] for bm in model.ma_coeffs]])
        a = np.concatenate([[1.0], [-am[0, 0] for am in model.ar_coeffs]])
        x = lfilter(b, a, w[:, :, 0], axis=1)[:, :, None]
        return x
    x = np.zeros((len(path_ids), total, n))
    p, q = model.p, model.q
    for k in range(total):
        acc = w[:, k, :].copy()
        for i in range(1, min(k, p) + 1):
            acc += x[:, k - i, :] @ model.ar_coeffs[i - 1].T
        for j in range(1, min(k, q) + 1):
            acc += w[:, k - j, :] @ model.ma_coeffs[j - 1].T
        x[:, k, :] = acc
    return x


def simulate(model: ProcessModel, length: int, paths: int = 1, seed: int = 0,
             burn_in: int | None = None, workers: int = 1) -> SampleSet:
    """Simulate stationary-regime paths of the model.

    The first ``burn_in`` steps (default ``10 * (p + q + 16)``) are run from
    a zero state and discarded.  Deterministic in ``seed`` and independent
    of ``workers``.
    """
    if length < 1 or paths < 1:
        raise ValueError("length and paths must be >= 1")
    if burn_in is None:
        burn_in = model.default_burn_in()
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    total = length + burn_in
    out = np.empty((paths, length, model.dim))

    def fill(block):
        lo, hi = block
        x = _simulate_paths(model, range(lo, hi), total, seed)
        out[lo:hi] = x[:, burn_in:, :]

    blocks = _split_blocks(paths, workers)
    if len(blocks) == 1:
        fill(blocks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            list(pool.map(fill, blocks))
    return SampleSet(data=out, seed=seed, burn_in=burn_in)


def _split_blocks(paths: int, workers: int):
    workers = max(1, min(workers, paths))
    size = math.ceil(paths / workers)
    return [(lo, min(lo + size, paths)) for lo in range(0, paths, size)]


def _state_space(model: ProcessModel):
    """Companion state s_k = [x lags (p_eff), w lags (q)] with s = F s_- + G w."""
    n = model.dim
    p_eff = max(model.p, 1)
    ar = list(model.ar_coeffs) + [np.zeros((n, n))] * (p_eff - model.p)
    q = model.q
    dim_s = n * (p_eff + q)
    F = np.zeros((dim_s, dim_s))
    F[:n, : n * p_eff] = np.hstack(ar)
    if model.q:
        F[:n, n * p_eff:] = np.hstack([b for b in model.ma_coeffs])
    if p_eff > 1:
        F[n: n * p_eff, : n * (p_eff - 1)] = np.eye(n * (p_eff - 1))
    if q > 1:
        F[n * p_eff + n:, n * p_eff: n * p_eff + n * (q - 1)] = np.eye(n * (q - 1))
    G = np.zeros((dim_s, n))
    G[:n] = np.eye(n)
    if q:
        G[n * p_eff: n * p_eff + n] = np.eye(n)
    return F, G


def theoretical_autocov(model: ProcessModel, max_lag: int) -> AutocovSequence:
    """Exact autocovariances R(0..max_lag) via the companion Lyapunov equation."""
    n = model.dim
    F, G = _state_space(model)
    Q = G @ model.innovation.covariance() @ G.T
    P = solve_discrete_lyapunov(F, Q)
    values = np.zeros((max_lag + 1, n, n))
    M = P.copy()
    for k in range(max_lag + 1):
        # E[x_{i+k} x_i^T] = (F^k P)[:n,:n]; R(k) = E[x_i x_{i+k}^T] is its transpose
        values[k] = M[:n, :n].T
        M = F @ M
    return AutocovSequence(values=values, source="theoretical")


def theoretical_spectrum(model: ProcessModel, n_freq: int = 4096) -> SpectrumGrid:
    """Asymptotic power spectrum Phi(w) on the uniform grid w_j = -pi + 2*pi*j/N.

    Phi(w) = conj(H) Sigma H^T with H = A(e^{-jw})^{-1} B(e^{-jw}), matching
    the R(k) = E[x_i x_{i+k}^T] transform convention.
    """
    if n_freq < 2 * (model.p + model.q + 1):
        raise ValueError(f"n_freq={n_freq} too small for order ({model.p},{model.q})")
    n = model.dim
    omega = -np.pi + 2.0 * np.pi * np.arange(n_freq) / n_freq
    z = np.exp(-1j * omega)  # e^{-j w}
    sigma = model.innovation.covariance()
    eye = np.eye(n)
    A = np.broadcast_to(eye, (n_freq, n, n)).astype(complex).copy()
    for i, a in enumerate(model.ar_coeffs, start=1):
        A -= (z ** i)[:, None, None] * a
    B = np.broadcast_to(eye, (n_freq, n, n)).astype(complex).copy()
    for j, b in enumerate(model.ma_coeffs, start=1):
        B += (z ** j)[:, None, None] * b
    H = np.linalg.solve(A, B)
    phi = np.conj(H) @ sigma @ np.transpose(H, (0, 2, 1))
    # enforce exact Hermitian symmetry against roundoff
    phi = 0.5 * (phi + np.conj(np.transpose(phi, (0, 2, 1))))
    return SpectrumGrid(values=phi)


def simulate_recursive(spec: RecursiveSpec, length: int, paths: int = 1,
                       seed: int = 0, burn_in: int = 200):
    """Simulate the recursive system; returns (states, g_values).

    ``g_values[k] = f(x_k) + n_k`` is the realized left-hand-side stream,
    equal by construction to g_{k+1}(x_{0..k+1}); it has length-1 fewer
    samples than the state stream.
    """
    n = spec.dim
    total = length + burn_in
    noise = np.stack([spec.noise.sample(_path_rng(seed, pid), total - 1)
                      for pid in range(paths)])
    x = np.zeros((paths, total, n))
    g = np.zeros((paths, total - 1, n))
    for k in range(total - 1):
        fx = spec.feedback(x[:, k, :])
        g[:, k, :] = fx + noise[:, k, :]
        if spec.g_form == "difference":
            x[:, k + 1, :] = x[:, k, :] + g[:, k, :]
        elif spec.g_form == "identity":
            x[:, k + 1, :] = g[:, k, :]
        else:  # second_difference
            prev = x[:, k - 1, :] if k >= 1 else np.zeros((paths, n))
            x[:, k + 1, :] = 2.0 * x[:, k, :] - prev + g[:, k, :]
        if np.max(np.abs(x[:, k + 1, :])) > OVERFLOW_GUARD:
            raise DivergenceError(f"recursion exceeded overflow guard at step {k + 1}")
    states = SampleSet(data=x[:, burn_in:, :], seed=seed, burn_in=burn_in)
    gvals = SampleSet(data=g[:, burn_in:, :], seed=seed, burn_in=burn_in)
    return states, gvals
