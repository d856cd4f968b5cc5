# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled descent-ensemble kernel.

Bit generators are created in Python by the same (master_seed, index)
derivation as the numpy backend, so both backends consume identical
random streams; the per-member field generation, gradient step and
re-evaluation run here as one fused pass without temporaries.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, sin, sqrt

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal_fill,
    random_standard_uniform_fill,
)

from ._kernels_py import member_bitgens

cnp.import_array()


cdef bitgen_t *_state(object bitgen):
    return <bitgen_t *> PyCapsule_GetPointer(bitgen.capsule, "BitGenerator")


def run_fresh_ensemble(N, M, eta, num_points, master_seed, box):
    """Single gradient step on num_points independent field realizations.

    Matches _kernels_py.run_fresh_ensemble stream-for-stream; results
    differ only by floating-point summation order.
    """
    cdef Py_ssize_t n = N, m = M, count = num_points
    cdef double step = eta, half_width = box
    if n < 1 or m <= n or count < 0:
        raise ValueError("require N >= 1, M > N, num_points >= 0")

    cdef cnp.ndarray[cnp.float64_t, ndim=1] phi0 = np.empty(count)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] phi1 = np.empty(count)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_sq = np.empty(count)
    cdef double[:, ::1] Z = np.empty((m, n))
    cdef double[::1] w = np.empty(2 * m)
    cdef double[::1] x0 = np.empty(n)
    cdef double[::1] x1 = np.empty(n)
    cdef double[::1] g = np.empty(n)

    cdef bitgen_t *bz
    cdef bitgen_t *bw
    cdef bitgen_t *bx
    cdef Py_ssize_t i, j, k
    cdef double inv_sqrt_m = 1.0 / sqrt(<double> m)
    cdef double t, c, s, wr, wi, acc0, acc1, coef, gk, gsq

    for i in range(count):
        gens = member_bitgens(master_seed, i)
        bz = _state(gens[0])
        bw = _state(gens[1])
        bx = _state(gens[2])
        with nogil:
            random_standard_normal_fill(bz, m * n, &Z[0, 0])
            random_standard_normal_fill(bw, 2 * m, &w[0])
            random_standard_uniform_fill(bx, n, &x0[0])
            for k in range(n):
                x0[k] = half_width * (2.0 * x0[k] - 1.0)
                g[k] = 0.0
            acc0 = 0.0
            for j in range(m):
                t = 0.0
                for k in range(n):
                    t += Z[j, k] * x0[k]
                c = cos(t)
                s = sin(t)
                wr = w[2 * j] * inv_sqrt_m
                wi = w[2 * j + 1] * inv_sqrt_m
                acc0 += wr * c - wi * s
                coef = wr * s + wi * c
                for k in range(n):
                    g[k] += coef * Z[j, k]
            gsq = 0.0
            for k in range(n):
                gk = -g[k]
                g[k] = gk
                gsq += gk * gk
                x1[k] = x0[k] - step * gk
            acc1 = 0.0
            for j in range(m):
                t = 0.0
                for k in range(n):
                    t += Z[j, k] * x1[k]
                acc1 += (w[2 * j] * inv_sqrt_m) * cos(t) - (w[2 * j + 1] * inv_sqrt_m) * sin(t)
        phi0[i] = acc0
        phi1[i] = acc1
        grad_sq[i] = gsq
    return phi0, phi1, grad_sq
