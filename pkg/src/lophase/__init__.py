"""Truncated Fock-space simulation of quantum optics with phase-averaged lasers.

Subpackages
    fock       -- truncated Fock-space states, operators, beamsplitter, fidelity
    specfun    -- log-space special functions (beta, Hermite, confluent hypergeometric)
    ensembles  -- phase-grid laser ensembles and local-oscillator records
    homodyne   -- balanced homodyne probabilities, collapse, and sampling
    teleport   -- dual-homodyne projection, transfer operator, fidelity experiments
    contmeas   -- two-laser continuous measurement: jump statistics and trajectories
    cli        -- command-line experiments
"""

__version__ = "0.1.0"

from ._backend import STEPPER_BACKEND

__all__ = ["__version__", "STEPPER_BACKEND"]
