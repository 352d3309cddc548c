"""Riccati-Bessel data for partial-wave free Green's functions.

Products ``jhat_l(z1) * hhat_l(z2)`` overflow quickly when computed from the
individual functions (``jhat`` underflows and ``hhat`` overflows once
``l >> |z|``).  Everything here is expressed through ratios: the outgoing
function is accumulated as a log of ratios ``t_l = hhat_l / hhat_{l-1}``
(upward recurrence, stable), the regular one through ``s_l = jhat_l /
jhat_{l-1}`` (downward recurrence), and the Casoratian
``jhat_{l+1} hhat_l - jhat_l hhat_{l+1} = i`` ties the two together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RiccatiTable:
    """Ratio tables for orders ``-1 .. lmax+1`` at the points ``z``.

    Row ``m`` of each array refers to order ``l = m - 1``.
    """

    z: np.ndarray
    logh: np.ndarray  # log hhat_l(z), consistent branch per point
    s: np.ndarray  # jhat_l / jhat_{l-1}
    t: np.ndarray  # hhat_l / hhat_{l-1}

    @property
    def lmax(self) -> int:
        return self.logh.shape[0] - 3


def riccati_table(lmax: int, z: np.ndarray) -> RiccatiTable:
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("riccati_table needs nonzero arguments")
    shape = z.shape
    zf = z.ravel()
    nrow = lmax + 3
    inv_z = 1.0 / zf

    t = np.empty((nrow, zf.size), dtype=complex)
    t[0] = np.nan  # t_{-1} unused
    t[1] = -1j
    for m in range(2, nrow):
        ell = m - 1
        t[m] = (2 * ell - 1) * inv_z - 1.0 / t[m - 1]
    logh = np.empty_like(t)
    logh[0] = 1j * zf
    logh[1] = np.log(-1j) + 1j * zf
    for m in range(2, nrow):
        logh[m] = logh[m - 1] + np.log(t[m])

    ltop = lmax + 1 + 40 + int(np.ceil(1.3 * np.max(np.abs(zf), initial=0.0)))
    s_next = np.zeros(zf.size, dtype=complex)
    s = np.empty_like(t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for ell in range(ltop, -1, -1):
            s_cur = 1.0 / ((2 * ell + 1) * inv_z - s_next)
            if ell <= lmax + 1:
                s[ell + 1] = s_cur
            s_next = s_cur
    s[0] = np.nan
    return RiccatiTable(
        z=z,
        logh=logh.reshape((nrow,) + shape),
        s=s.reshape((nrow,) + shape),
        t=t.reshape((nrow,) + shape),
    )


def jh_product(tab_lo: RiccatiTable, tab_hi: RiccatiTable, idx_lo, idx_hi, ell: int):
    """``jhat_l(z_lo) * hhat_l(z_hi)`` for index arrays into the two tables."""
    m = ell + 1
    num = np.exp(tab_hi.logh[m][idx_hi] - tab_lo.logh[m][idx_lo])
    den = tab_lo.s[m + 1][idx_lo] - tab_lo.t[m + 1][idx_lo]
    return 1j * num / den


def jprime_h_product(tab_lo, tab_hi, idx_lo, idx_hi, ell: int):
    """``jhat_l'(z_lo) * hhat_l(z_hi)`` via ``jhat_l' = jhat_{l-1} - l/z jhat_l``."""
    m = ell + 1
    num = np.exp(tab_hi.logh[m][idx_hi] - tab_lo.logh[m - 1][idx_lo])
    den = tab_lo.s[m][idx_lo] - tab_lo.t[m][idx_lo]
    jm1_h = 1j * num / den
    z_lo = tab_lo.z[idx_lo]
    return jm1_h - ell / z_lo * jh_product(tab_lo, tab_hi, idx_lo, idx_hi, ell)


def log_hprime_ratio(tab: RiccatiTable, idx, ell: int):
    """``hhat_l'(z) / hhat_l(z)``."""
    m = ell + 1
    return 1.0 / tab.t[m][idx] - ell / tab.z[idx]
