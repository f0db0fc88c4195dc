"""Shared rule constants for the certification engines and the online oracle.

Both sides must use identical tie-breaking rules and tolerances; these values
are the single source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CertSettings:
    tol_feas: float = 1e-9        # region membership tolerance
    tol_value: float = 1e-8       # value-function comparison tolerance
    big_m: float = 1e6            # artificial-variable cost in the LP engines
    pivot_tol: float = 1e-9       # reduced-cost / pivot-element threshold
    tie_tol: float = 1e-9         # candidates within this of the minimum tie
    zero_tol: float = 1e-11       # zero-direction test in the QP engines
    pivot_cap: int = 100_000      # hard per-region iteration cap (breach -> error)
    bland_after: int = 10_000     # anti-cycling rule kicks in after this many pivots
    int_coeff_tol: float = 1e-10  # optimizer coefficient threshold for integrality
    int_value_tol: float = 1e-8   # optimizer offset distance to {0, 1}
    redundancy_factor: int = 4    # prune rows when count > factor * (m + n_theta)


DEFAULT_SETTINGS = CertSettings()
