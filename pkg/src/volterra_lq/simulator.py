"""Wiener-Hammerstein (FIR -> static map -> IIR) data generator.

The default cascade is the WH2 toy system: two-tap input dynamics
``[1, -1]``, a squaring nonlinearity, and output dynamics
``G(z) = 0.2655 z / (z^2 - 1.714 z + 0.78)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from scipy import signal

from .data import Dataset

NONLINEARITIES = ("identity", "square", "polynomial", "saturation")


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function in descending powers of ``z``.

    ``num`` may not have higher degree than ``den`` (causality). The
    denominator is normalized to a leading coefficient of one.
    """

    num: tuple[float, ...]
    den: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        num = np.trim_zeros(np.asarray(self.num, dtype=float), "f")
        den = np.trim_zeros(np.asarray(self.den, dtype=float), "f")
        if den.size == 0:
            raise ValueError("denominator is zero")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise ValueError("improper transfer function (numerator degree > denominator degree)")
        num, den = num / den[0], den / den[0]
        object.__setattr__(self, "num", tuple(num.tolist()))
        object.__setattr__(self, "den", tuple(den.tolist()))

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.den) if len(self.den) > 1 else np.zeros(0)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def ba(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients in ascending powers of ``z^-1`` for ``lfilter``."""
        den = np.asarray(self.den)
        num = np.zeros(den.size)
        num[den.size - len(self.num):] = self.num
        return num, den

    def filter(self, x) -> np.ndarray:
        b, a = self.ba()
        return signal.lfilter(b, a, np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}


WH2_OUTPUT = TransferFunction((0.2655, 0.0), (1.0, -1.714, 0.78))


def impulse_response(tf: TransferFunction, length: int) -> np.ndarray:
    """First ``length`` impulse-response samples of ``tf`` (zero initial state)."""
    if not tf.is_stable():
        raise StabilityError(f"unstable transfer function, poles {tf.poles}")
    delta = np.zeros(length)
    if length:
        delta[0] = 1.0
    return tf.filter(delta)


@dataclass(frozen=True)
class BlockCascade:
    """FIR -> pointwise nonlinearity -> IIR.

    ``nonlinearity`` is one of ``identity``, ``square``, ``polynomial``
    (``params`` holds ascending coefficients c0, c1, ...) or ``saturation``
    (``params = (level,)``, clips to ``[-level, level]``).
    """

    input_fir: tuple[float, ...] = (1.0, -1.0)
    nonlinearity: str = "square"
    params: tuple[float, ...] = ()
    output_iir: TransferFunction = WH2_OUTPUT

    def __post_init__(self):
        object.__setattr__(self, "input_fir", tuple(float(v) for v in self.input_fir))
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if not self.input_fir:
            raise ValueError("input FIR needs at least one tap")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.nonlinearity == "polynomial" and not self.params:
            raise ValueError("polynomial nonlinearity needs coefficients")
        if self.nonlinearity == "saturation" and (len(self.params) != 1 or self.params[0] <= 0):
            raise ValueError("saturation needs one positive level")
        if not self.output_iir.is_stable():
            raise StabilityError(f"output filter is unstable, poles {self.output_iir.poles}")

    def static_map(self, x: np.ndarray) -> np.ndarray:
        if self.nonlinearity == "identity":
            return x.copy()
        if self.nonlinearity == "square":
            return x * x
        if self.nonlinearity == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.params)
        level = self.params[0]
        return np.clip(x, -level, level)

    def poly_coeffs(self) -> tuple[float, ...]:
        """Ascending polynomial coefficients of the static map."""
        return {"identity": (0.0, 1.0), "square": (0.0, 0.0, 1.0)}.get(
            self.nonlinearity, self.params if self.nonlinearity == "polynomial" else None)

    def run(self, u) -> np.ndarray:
        """Noiseless output for input ``u`` (zero initial conditions)."""
        u = np.asarray(u, dtype=float)
        v = np.convolve(u, self.input_fir)[:u.size]
        return self.output_iir.filter(self.static_map(v))

    def to_dict(self) -> dict:
        return {"input_fir": list(self.input_fir), "nonlinearity": self.nonlinearity,
                "params": list(self.params), "output_iir": self.output_iir.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockCascade":
        iir = d.get("output_iir")
        return cls(tuple(d.get("input_fir", (1.0, -1.0))), d.get("nonlinearity", "square"),
                   tuple(d.get("params", ())),
                   TransferFunction(tuple(iir["num"]), tuple(iir["den"])) if iir else WH2_OUTPUT)


WH2 = BlockCascade()


@dataclass(frozen=True)
class SignalSpec:
    """Excitation and noise settings.

    ``snr`` is the ratio ``var(z)/var(e)`` of the realized noiseless output
    ``z`` to the noise; with ``snr_unit='dB'`` it is given in decibels.
    ``None`` disables noise.
    """

    N: int
    seed: int = 0
    snr: float | None = None
    snr_unit: str = "linear"
    correlate_with: TransferFunction | None = None
    tau: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.snr is not None and self.snr_unit == "linear" and self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.snr_unit not in ("linear", "dB"):
            raise ValueError("snr_unit must be 'linear' or 'dB'")

    @property
    def snr_ratio(self) -> float | None:
        if self.snr is None:
            return None
        return 10.0 ** (self.snr / 10.0) if self.snr_unit == "dB" else float(self.snr)

    def to_dict(self) -> dict:
        return {"N": self.N, "seed": self.seed, "snr": self.snr, "snr_unit": self.snr_unit,
                "correlate_with": self.correlate_with.to_dict() if self.correlate_with else None,
                "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "SignalSpec":
        corr = d.get("correlate_with")
        return cls(int(d["N"]), int(d.get("seed", 0)), d.get("snr"), d.get("snr_unit", "linear"),
                   TransferFunction(tuple(corr["num"]), tuple(corr["den"])) if corr else None,
                   d.get("tau"))


def _rng(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    # independent streams for the input and the noise, both PCG64
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(a)), np.random.Generator(np.random.PCG64(b))


def generate_input(spec: SignalSpec) -> np.ndarray:
    """White uniform input on ``[-sqrt(3), sqrt(3)]`` (unit variance).

    With ``correlate_with`` set, the white sequence is passed through that
    filter and rescaled to unit empirical variance.
    """
    rng, _ = _rng(spec.seed)
    u = rng.uniform(-sqrt(3.0), sqrt(3.0), spec.N)
    if spec.correlate_with is not None:
        if not spec.correlate_with.is_stable():
            raise StabilityError("correlating filter is unstable")
        u = spec.correlate_with.filter(u)
        sd = u.std()
        if sd > 0:
            u = u / sd
    return u


def simulate(cascade: BlockCascade, spec: SignalSpec) -> Dataset:
    """Run the cascade on a generated input and add scaled white Gaussian noise."""
    u = generate_input(spec)
    z = cascade.run(u)
    ratio = spec.snr_ratio
    if ratio is None:
        y = z
        noise_var = 0.0
        realized = None
    else:
        _, rng = _rng(spec.seed)
        noise_var = float(z.var()) / ratio
        e = rng.standard_normal(spec.N) * sqrt(noise_var)
        y = z + e
        realized = float(z.var() / e.var()) if e.var() > 0 else None
    meta = {"seed": spec.seed, "spec": spec.to_dict(), "cascade": cascade.to_dict(),
            "realized_snr": realized, "noise_variance": noise_var, "tau": spec.tau}
    meta.update(spec.meta)
    return Dataset(u, y, spec.tau, meta)


def noiseless_output(cascade: BlockCascade, data: Dataset) -> np.ndarray:
    return cascade.run(data.u)


def volterra_coefficients(cascade: BlockCascade, structure) -> np.ndarray:
    """Exact Volterra coefficients of a polynomial cascade, truncated to ``structure``.

    For a static map ``sum_p c_p x^p`` the symmetric p-th order kernel is
    ``h(k_1..k_p) = c_p sum_j g_j prod_i lam(k_i - j)`` with ``lam`` the FIR
    taps and ``g`` the output impulse response. The returned canonical
    coefficient of each lag multiset is ``h`` times the number of orderings
    of that multiset. Terms beyond the structure's degree or memory are
    dropped, so the result is the truncated (not the best-fit) model.
    """
    from .dictionary import enumerate_terms

    coeffs = cascade.poly_coeffs()
    if coeffs is None:
        raise ValueError(f"{cascade.nonlinearity} has no finite Volterra expansion")
    lam = np.asarray(cascade.input_fir)
    L = max(structure.memory_lengths)
    g = impulse_response(cascade.output_iir, L)
    out = []
    for term in enumerate_terms(structure):
        p = term.order
        cp = coeffs[p] if p < len(coeffs) else 0.0
        if cp == 0.0:
            out.append(0.0)
            continue
        if p == 0:
            # constant input to the output filter: its DC gain
            b, a = cascade.output_iir.ba()
            out.append(cp * b.sum() / a.sum())
            continue
        total = 0.0
        for j in range(L):
            prod = g[j]
            for k in term.lags:
                i = k - j
                prod *= lam[i] if 0 <= i < lam.size else 0.0
            total += prod
        out.append(cp * total * term.multiplicity())
    return np.array(out)
