"""Pure-Python twin of ``_ckernels``, used when the extension is unavailable."""

from __future__ import annotations

import math


def spectrum(w: float, gamma: float, cutoff: float, T: float, classical: bool) -> float:
    drude = cutoff * cutoff / (cutoff * cutoff + w * w)
    if classical:
        return 2.0 * gamma * T / math.pi * drude
    if T <= 0.0:
        return gamma / math.pi * w * drude
    x = w / (2.0 * T)
    if x < 1e-6:
        return gamma / math.pi * drude * 2.0 * T * (1.0 + x * x / 3.0)
    return gamma / math.pi * drude * w / math.tanh(x)


def pole_integrand(w: float, p) -> float:
    z = complex(p[0], p[1])
    S = spectrum(w, p[2], p[3], p[4], p[5] != 0.0)
    part = int(p[6])
    sigma = p[7]
    den = (z + 1j * w) * (z - 1j * w)
    if part < 2:
        val = 2.0 * S * z / den
        if p[9]:
            val -= p[8] / (z - 1j * sigma * w)
    else:
        val = 2.0 * S * w / den
        if p[9]:
            val += 1j * sigma * p[8] / (z - 1j * sigma * w)
    return val.real if part in (0, 2) else val.imag
