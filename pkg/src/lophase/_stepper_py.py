"""Numpy fallback for the trajectory stepping kernel.

Same contract as the compiled ``_stepper`` (see its docstring).  The total
jump probability per step does not depend on the posterior, so the jump steps
can be located with one vectorized comparison; only the port decision and the
posterior reweighting are sequential, and there are O(jumps), not O(steps),
of those.
"""

import numpy as np


def run_steps(sin2, cos2, weights, p_tot, u_step, u_split):
    jump_steps = np.nonzero(u_step < p_tot)[0].astype(np.int64)
    jump_modes = np.empty(jump_steps.size, dtype=np.uint8)
    es = float(weights @ sin2) / float(weights.sum())
    for j, step in enumerate(jump_steps):
        if u_split[step] < es:
            jump_modes[j] = 0
            weights *= sin2
        else:
            jump_modes[j] = 1
            weights *= cos2
        weights /= weights.max()
        es = float(weights @ sin2) / float(weights.sum())
    return jump_steps, jump_modes
