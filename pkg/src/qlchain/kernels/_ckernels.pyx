# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled integrands for the single-pole frequency integrals.

``pole_integrand`` has the ``double f(double, void *)`` signature expected by
``scipy.LowLevelCallable``. ``user_data`` points at a ``double[10]``:

    [a, b, gamma, cutoff, T, classical, part, sigma, S0, subtract]

with ``z = a + i b`` the pole. ``part`` selects Re/Im of the cosine factor
(0, 1) or the sine factor (2, 3).
"""

from libc.math cimport M_PI, tanh

cdef extern from "complex.h" nogil:
    double creal(double complex)
    double cimag(double complex)


cdef inline double noise_spectrum(double w, double gamma, double cutoff,
                                  double T, bint classical) noexcept nogil:
    cdef double drude = cutoff * cutoff / (cutoff * cutoff + w * w)
    cdef double x
    if classical:
        return 2.0 * gamma * T / M_PI * drude
    if T <= 0.0:
        return gamma / M_PI * w * drude
    x = w / (2.0 * T)
    if x < 1e-6:
        # w coth(w / 2T) = 2T (1 + x^2 / 3 + ...)
        return gamma / M_PI * drude * 2.0 * T * (1.0 + x * x / 3.0)
    return gamma / M_PI * drude * w / tanh(x)


cdef api double pole_integrand(double w, void *user_data) noexcept nogil:
    cdef double *p = <double *> user_data
    cdef double complex z = p[0] + 1j * p[1]
    cdef double S = noise_spectrum(w, p[2], p[3], p[4], p[5] != 0.0)
    cdef int part = <int> p[6]
    cdef double sigma = p[7]
    cdef double complex den = (z + 1j * w) * (z - 1j * w)
    cdef double complex val
    if part < 2:
        val = 2.0 * S * z / den
        if p[9] != 0.0:
            val = val - p[8] / (z - 1j * sigma * w)
    else:
        val = 2.0 * S * w / den
        if p[9] != 0.0:
            val = val + 1j * sigma * p[8] / (z - 1j * sigma * w)
    if part == 0 or part == 2:
        return creal(val)
    return cimag(val)


def spectrum(double w, double gamma, double cutoff, double T, bint classical):
    return noise_spectrum(w, gamma, cutoff, T, classical)
