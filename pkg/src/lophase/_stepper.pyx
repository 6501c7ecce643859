# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trajectory stepping kernel.

Contract shared with the numpy fallback (see ``_stepper_py``):

Inputs
    sin2, cos2 : (K,) per-grid-point jump likelihoods sin^2(Delta/2), cos^2(Delta/2)
    weights    : (K,) posterior weights, updated in place
    p_tot      : (n_steps,) per-step total jump probability 4 R r_t^2 dt
    u_step     : (n_steps,) uniforms deciding jump / no jump
    u_split    : (n_steps,) uniforms deciding which output port jumped

Semantics per step i: a jump occurs iff u_step[i] < p_tot[i].  On a jump the
port is "c" iff u_split[i] < <sin^2>_w, the weights are multiplied by the
matching likelihood and renormalized to max 1.  Between jumps the weights are
untouched (a null result carries no phase information, because the total jump
probability is posterior-independent).

Returns (jump_steps int64 array, jump_modes uint8 array) with mode 0 = "c",
mode 1 = "d".
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def run_steps(double[::1] sin2, double[::1] cos2, double[::1] weights,
              double[::1] p_tot, double[::1] u_step, double[::1] u_split):
    cdef Py_ssize_t n_steps = p_tot.shape[0]
    cdef Py_ssize_t K = sin2.shape[0]
    cdef Py_ssize_t i, k, nj = 0
    cdef double dot_s, tot, es, wmax

    jump_steps_arr = np.empty(n_steps, dtype=np.int64)
    jump_modes_arr = np.empty(n_steps, dtype=np.uint8)
    cdef long long[::1] jump_steps = jump_steps_arr
    cdef unsigned char[::1] jump_modes = jump_modes_arr

    dot_s = 0.0
    tot = 0.0
    for k in range(K):
        dot_s += weights[k] * sin2[k]
        tot += weights[k]
    es = dot_s / tot

    for i in range(n_steps):
        if u_step[i] < p_tot[i]:
            if u_split[i] < es:
                jump_modes[nj] = 0
                for k in range(K):
                    weights[k] *= sin2[k]
            else:
                jump_modes[nj] = 1
                for k in range(K):
                    weights[k] *= cos2[k]
            jump_steps[nj] = i
            nj += 1
            wmax = 0.0
            for k in range(K):
                if weights[k] > wmax:
                    wmax = weights[k]
            dot_s = 0.0
            tot = 0.0
            for k in range(K):
                weights[k] /= wmax
                dot_s += weights[k] * sin2[k]
                tot += weights[k]
            es = dot_s / tot

    return jump_steps_arr[:nj].copy(), jump_modes_arr[:nj].copy()
