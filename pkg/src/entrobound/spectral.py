"""Autocovariance and spectrum estimation, log-spectrum integrals, and
scalar minimum-phase spectral factorization.

Frequency grids are uniform, ``w_j = -pi + 2*pi*j/N``; integrals
``(1/2pi) int f(w) dw`` are evaluated with the periodic trapezoid rule,
which on this grid is exactly the grid mean and is spectrally accurate for
the smooth integrands produced by stable ARMA models.  All logarithms
reported by this module are base 2 (results in bits); natural logs appear
only inside the cepstral factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy.signal import get_window

from .errors import (
    DimensionError,
    LagError,
    MatrixError,
    SegmentError,
    SingularSpectrumError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .procgen import SampleSet

FLOOR_EPS = 1e-12
LOG2 = np.log(2.0)


@dataclass(frozen=True)
class AutocovSequence:
    """Autocovariances R(0..L), convention R(k) = E[x_i x_{i+k}^T].

    ``values`` has shape (L+1, n, n).  ``source`` is "theoretical" or
    "estimated"; estimated sequences carry the pooled sample count used by
    the biased (divide-by-N) estimator, which keeps the implied block
    Toeplitz matrix PSD.
    """

    values: np.ndarray
    source: str = "theoretical"
    sample_count: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("values must be (L+1, n, n)")
        object.__setattr__(self, "values", v)
        r0 = v[0]
        if not np.allclose(r0, r0.T, atol=1e-8 * max(1.0, np.abs(r0).max())):
            raise MatrixError("R(0) must be symmetric")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def max_lag(self) -> int:
        return self.values.shape[0] - 1

    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise DimensionError("scalar() requires a 1-d process")
        return self.values[:, 0, 0]

    def block_toeplitz(self, order: int | None = None) -> np.ndarray:
        """Covariance of the stacked vector [x_0; ...; x_order]."""
        L = self.max_lag if order is None else order
        if L > self.max_lag:
            raise LagError(f"order {L} exceeds available lags {self.max_lag}")
        n = self.dim
        T = np.zeros(((L + 1) * n, (L + 1) * n))
        for i in range(L + 1):
            for j in range(L + 1):
                blk = self.values[j - i] if j >= i else self.values[i - j].T
                T[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
        return T


@dataclass(frozen=True)
class SpectrumGrid:
    """Sampled power spectrum on ``w_j = -pi + 2*pi*j/N``.

    ``values`` has shape (N, n, n), Hermitian PSD at every grid point;
    scalar spectra are stored as (N, 1, 1).  ``floored`` records whether
    any eigenvalue was clipped up to the floor at construction time.
    """

    values: np.ndarray
    floored: bool = False

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("values must be (N, n, n)")
        v = v.astype(complex)
        herm_err = np.max(np.abs(v - np.conj(np.transpose(v, (0, 2, 1)))))
        scale = max(1.0, float(np.max(np.abs(v))))
        if herm_err > 1e-10 * scale:
            raise MatrixError(f"spectrum not Hermitian (max asymmetry {herm_err:.2e})")
        object.__setattr__(self, "values", v)

    @property
    def n_freq(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        N = self.n_freq
        return -np.pi + 2.0 * np.pi * np.arange(N) / N

    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise DimensionError("scalar() requires a 1-d spectrum")
        return self.values[:, 0, 0].real

    def mean_matrix(self) -> np.ndarray:
        """(1/2pi) int Phi(w) dw, i.e. R(0), by the periodic trapezoid rule."""
        return self.values.mean(axis=0).real

    def to_csv(self, path) -> None:
        """CSV export: ``omega, re(phi_ij), im(phi_ij), ...`` row per frequency."""
        n = self.dim
        cols = [self.frequencies]
        names = ["omega"]
        for i in range(n):
            for j in range(n):
                cols.append(self.values[:, i, j].real)
                cols.append(self.values[:, i, j].imag)
                names.append(f"re_phi_{i}{j}")
                names.append(f"im_phi_{i}{j}")
        table = np.column_stack(cols)
        np.savetxt(path, table, delimiter=",", header=",".join(names),
                   comments="", fmt="%.17g")


class LogIntegral(NamedTuple):
    value_bits: float
    floored: bool


def estimate_autocov(samples: "SampleSet", max_lag: int) -> AutocovSequence:
    """Biased autocovariance estimate averaged over paths.

    Divides by N (not N-k) so the implied block Toeplitz matrix stays PSD
    and Levinson-Durbin remains well-posed.
    """
    data = samples.data
    P, N, n = data.shape
    if max_lag >= N / 4:
        raise LagError(f"max_lag {max_lag} must be < length/4 = {N / 4:g}")
    values = np.empty((max_lag + 1, n, n))
    for k in range(max_lag + 1):
        # R(k) = E[x_i x_{i+k}^T]
        values[k] = np.einsum("pti,ptj->ij", data[:, : N - k], data[:, k:]) / (N * P)
    values[0] = 0.5 * (values[0] + values[0].T)
    return AutocovSequence(values=values, source="estimated", sample_count=P * N)


def welch_spectrum(samples: "SampleSet", segment_len: int, overlap: float = 0.5,
                   n_freq: int = 4096) -> SpectrumGrid:
    """Hann-windowed averaged periodogram on the package frequency grid.

    Normalized by the window power so that the grid mean of the estimate
    is (in expectation) R(0).  Matrix case returns the full cross-spectral
    matrix with the R(k) = E[x_i x_{i+k}^T] transform convention.
    """
    data = samples.data
    P, N, n = data.shape
    if segment_len > N:
        raise SegmentError(f"segment_len {segment_len} > sample length {N}")
    if not 0.0 <= overlap < 1.0:
        raise SegmentError(f"overlap {overlap} must be in [0, 1)")
    if n_freq < segment_len:
        raise SegmentError(f"n_freq {n_freq} must be >= segment_len {segment_len}")
    window = get_window("hann", segment_len)
    u = float(np.sum(window ** 2))
    hop = max(1, int(round(segment_len * (1.0 - overlap))))
    starts = range(0, N - segment_len + 1, hop)
    acc = np.zeros((n_freq, n, n), dtype=complex)
    count = 0
    for p in range(P):
        for s in starts:
            seg = data[p, s: s + segment_len, :] * window[:, None]
            F = np.fft.fft(seg, n=n_freq, axis=0)  # (n_freq, n)
            acc += np.conj(F)[:, :, None] * F[:, None, :]
            count += 1
    phi = np.fft.fftshift(acc, axes=0) / (count * u)
    phi = 0.5 * (phi + np.conj(np.transpose(phi, (0, 2, 1))))
    return SpectrumGrid(values=phi)


def log_spectrum_integral(spec: SpectrumGrid, floor: float = FLOOR_EPS) -> LogIntegral:
    """(1/2pi) int log2 S(w) dw for a scalar spectrum, with flooring at eps.

    The flag reports whether flooring fired; a floored integral means the
    spectrum has (near-)zeros and the one-step bound below it degenerates.
    """
    if spec.dim != 1:
        raise DimensionError("scalar integral needs n = 1; use logdet_spectrum_integral")
    s = spec.scalar()
    floored = bool(np.any(s < floor)) or spec.floored
    value = float(np.mean(np.log2(np.maximum(s, floor))))
    return LogIntegral(value, floored)


def logdet_spectrum_integral(spec: SpectrumGrid, floor: float = FLOOR_EPS) -> LogIntegral:
    """(1/2pi) int log2 det Phi(w) dw with per-eigenvalue flooring."""
    eigs = np.linalg.eigvalsh(spec.values)
    if np.min(eigs) < -1e-10 * max(1.0, float(np.max(np.abs(eigs)))):
        raise MatrixError(f"spectrum has negative eigenvalues (min {np.min(eigs):.2e})")
    floored = bool(np.any(eigs < floor)) or spec.floored
    value = float(np.mean(np.sum(np.log2(np.maximum(eigs, floor)), axis=1)))
    return LogIntegral(value, floored)


@dataclass(frozen=True)
class SpectralFactor:
    """Causal minimum-phase factor c_0..c_M with c_0 > 0.

    |C(e^{jw})|^2 reconstructs the input spectrum; ``gain`` is c_0, the
    one-step innovation standard deviation of the implied whitening filter.
    """

    coeffs: np.ndarray
    gain: float
    recon_error: float


def _upsample_spectrum(s_std: np.ndarray, m: int) -> np.ndarray:
    """Trigonometric interpolation of a sampled real spectrum to m points.

    Implemented by zero-padding the autocovariance (inverse DFT of the
    spectrum) in the middle, with the usual Nyquist split.
    """
    n = len(s_std)
    if m <= n:
        return s_std
    r = np.fft.ifft(s_std)
    half = n // 2
    r_up = np.zeros(m, dtype=complex)
    r_up[:half] = r[:half]
    r_up[m - half + 1:] = r[half + 1:]
    r_up[half] = 0.5 * r[half]
    r_up[m - half] = 0.5 * r[half]
    return np.fft.fft(r_up).real


def spectral_factorize(spec: SpectrumGrid, n_fft: int | None = None,
                       tap_tol: float = 1e-9) -> SpectralFactor:
    """Minimum-phase factorization of a scalar spectrum (cepstral method).

    Takes the causal part of the cepstrum of log S and exponentiates: the
    resulting C(z) is causal and minimum phase with |C|^2 = S.  Spectra
    with points at/below the floor have a divergent log-integral
    (deterministic component) and raise SingularSpectrumError.
    """
    if spec.dim != 1:
        raise DimensionError("spectral_factorize handles scalar spectra only")
    s = spec.scalar()
    if spec.floored or np.any(s < FLOOR_EPS):
        raise SingularSpectrumError(
            "spectrum touches the floor: log-integral diverges, no regular factor"
        )
    s_std = np.fft.ifftshift(s)
    m = n_fft if n_fft is not None else max(8192, len(s_std))
    s_fine = _upsample_spectrum(s_std, m)
    if np.any(s_fine < FLOOR_EPS):
        raise SingularSpectrumError("interpolated spectrum touches the floor")
    cep = np.fft.ifft(np.log(s_fine))
    folded = np.zeros(m, dtype=complex)
    folded[0] = 0.5 * cep[0]
    folded[1: m // 2] = cep[1: m // 2]
    folded[m // 2] = 0.5 * cep[m // 2]
    C = np.exp(np.fft.fft(folded))
    taps = np.fft.ifft(C).real
    keep = np.nonzero(np.abs(taps[: m // 2]) >= tap_tol * abs(taps[0]))[0]
    coeffs = taps[: keep[-1] + 1] if len(keep) else taps[:1]
    # reconstruction check on the original grid
    omega = spec.frequencies
    response = np.abs(
        np.exp(-1j * np.outer(omega, np.arange(len(coeffs)))) @ coeffs
    ) ** 2
    recon_error = float(np.max(np.abs(response - s) / np.maximum(s, FLOOR_EPS)))
    return SpectralFactor(coeffs=coeffs, gain=float(coeffs[0]),
                          recon_error=recon_error)
