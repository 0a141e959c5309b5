import math

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from qlsed.special import (
    chi2_2dof_cdf,
    chi2_2dof_quantile,
    gauss_ratio,
    log_normal_cdf,
    marcum_q1,
    normal_cdf,
    normal_pdf,
)

mp.mp.dps = 40


def _ratio_mp(a, b):
    if a >= 0:
        # reflect into the lower tail so the CDF difference keeps its digits
        return -_ratio_mp(-b, -a)
    pdf = lambda x: mp.mpf(0) if mp.isinf(x) else mp.npdf(x)
    return float((pdf(b) - pdf(a)) / (mp.ncdf(b) - mp.ncdf(a)))


def _marcum_mp(a, b):
    f = lambda x: x * mp.exp(-(x * x + a * a) / 2) * mp.besseli(0, a * x)
    return float(mp.quad(f, [b, b + 10, mp.inf]))


CELLS = [(-np.inf, 0.0), (0.0, np.inf), (-1.0, 1.0), (8.0, 9.0), (-40.0, -39.5),
         (3.0, 3.0 + 1e-8), (-7.0, -7.0 + 2e-4), (0.2, 0.2 + 1e-3), (-np.inf, -30.0), (25.0, np.inf), (-0.5, 2.5)]


@pytest.mark.parametrize("a,b", CELLS)
def test_gauss_ratio_against_mpmath(a, b):
    want = _ratio_mp(mp.mpf(a), mp.mpf(b))
    got = float(gauss_ratio(a, b))
    assert got == pytest.approx(want, rel=1e-8, abs=1e-12)
    assert -b <= got <= -a


def test_gauss_ratio_requires_order():
    with pytest.raises(ValueError):
        gauss_ratio(1.0, 1.0)


@pytest.mark.parametrize("a,b", [(0.0, 1.0), (1.0, 2.0), (2.0, 1.0), (5.0, 6.2), (0.3, 4.0),
                                 (10.0, 14.0), (4.0, 0.5)])
def test_marcum_against_mpmath(a, b):
    assert marcum_q1(a, b) == pytest.approx(_marcum_mp(mp.mpf(a), mp.mpf(b)), rel=1e-8, abs=1e-14)


def test_marcum_matches_ncx2():
    for a, b in [(2.0, 1.0), (3.0, 4.35), (0.5, 0.2)]:
        assert marcum_q1(a, b) == pytest.approx(stats.ncx2.sf(b * b, 2, a * a), rel=1e-8)


def test_marcum_edges():
    assert marcum_q1(1.0, 0.0) == 1.0
    assert marcum_q1(0.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_normal_helpers():
    assert normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert normal_cdf(-40.0) == pytest.approx(float(mp.ncdf(-40)), rel=1e-10)
    assert log_normal_cdf(-40.0) == pytest.approx(float(mp.log(mp.ncdf(-40))), rel=1e-12)


def test_chi2_2dof():
    assert chi2_2dof_cdf(2.0) == pytest.approx(1 - math.exp(-1.0))
    assert chi2_2dof_quantile(chi2_2dof_cdf(3.7)) == pytest.approx(3.7)
