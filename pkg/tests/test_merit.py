import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from dynelab.merit import approx_merit_from_m4, heterodyne_exact, homodyne_exact, qubit_metrics, table1


def test_homodyne_exact_matches_normal_mean_absolute_value():
    val, _ = integrate.quad(lambda x: abs(x) * stats.norm.pdf(x), -np.inf, np.inf)
    assert homodyne_exact() == pytest.approx(val, abs=1e-12)


def test_heterodyne_exact_matches_rayleigh_mean():
    # |A| with E|A|^2 = 1 is Rayleigh with scale 1/sqrt(2)
    assert heterodyne_exact() == pytest.approx(stats.rayleigh(scale=1 / math.sqrt(2)).mean(), abs=1e-12)


@pytest.mark.parametrize("m4, expected", [(3.0, 0.75), (2.0, 0.875), (1.0, 1.0)])
def test_approx_merit_from_fourth_moment(m4, expected):
    assert approx_merit_from_m4(m4) == expected


def test_approx_merit_is_not_clipped():
    assert approx_merit_from_m4(0.5) > 1.0
    assert approx_merit_from_m4(20.0) < 0.0


def test_fourth_moments_of_reference_distributions():
    normal4 = stats.norm.moment(4)
    rayleigh4 = stats.rayleigh(scale=1 / math.sqrt(2)).moment(4)
    assert (normal4, rayleigh4) == (pytest.approx(3.0), pytest.approx(2.0))


def test_table1_rows():
    rows = {r.measurement: r for r in table1()}
    assert rows["homodyne"].exact == pytest.approx(0.797885, abs=1e-6)
    assert rows["heterodyne"].exact == pytest.approx(0.886227, abs=1e-6)
    assert (rows["adaptive"].exact, rows["adaptive"].approx) == (1.0, 1.0)
    assert rows["homodyne"].approx == 0.75
    assert rows["heterodyne"].approx == 0.875


def test_exact_merit_exceeds_approximation_for_reference_measurements():
    for row in table1()[:2]:
        assert row.exact > row.approx


@given(f=st.floats(0, 1))
def test_qubit_metrics_are_consistent(f):
    q = qubit_metrics(f)
    assert q.fidelity == pytest.approx((1 + f) / 2)
    assert np.trace(q.rho2).real == pytest.approx(1.0)
    assert np.trace(q.rho2 @ q.rho2).real == pytest.approx(q.purity)
    assert np.all(np.linalg.eigvalsh(q.rho2) >= -1e-15)


@pytest.mark.parametrize("f", [-0.1, 1.1, math.nan])
def test_qubit_metrics_rejects_out_of_range(f):
    with pytest.raises(ValueError):
        qubit_metrics(f)
