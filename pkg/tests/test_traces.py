import math

import mpmath as mp
import numpy as np
import pytest

from oracles import (ABS_BAND_TRACE_025_PLUS_I, BAND_TRACE, BAND_TRACE_COMPLEX, EXPONENT_1,
                     LENGTH_1)
from srlab.spectra import heisenberg_spectrum
from srlab.traces import (_closed_tail_bound, extract_lengths, heisenberg_trace_closed,
                          heisenberg_trace_lengths, pole_probe, table_trace, torus_theta,
                          trace_partial, trace_profile)

Z_SET = (0.1, 0.2, 0.5, 1.0, 2.0)


@pytest.mark.parametrize("z", Z_SET)
def test_identity_and_reference_values(z):
    p, tail = trace_partial(z)
    c = heisenberg_trace_closed(z)
    assert abs(p - c) <= 1e-8
    assert tail < 1e-14
    assert p == pytest.approx(BAND_TRACE[z], rel=2e-15)
    assert c == pytest.approx(BAND_TRACE[z], rel=2e-15)


def test_full_resummation_not_half():
    p, _ = trace_partial(1.0, cutoff=200)
    full = math.fsum(m / math.sinh(m) for m in range(1, 200))
    assert abs(p - full) <= 1e-12
    assert abs(p - 0.5 * full) > 0.9


def test_leading_term_at_large_z():
    z = 10.0
    p, _ = trace_partial(z)
    one = 2 * math.exp(-z)
    # the m = 2 term 4 e^{-2z} makes the relative error 2 e^{-z} to leading order
    assert abs(p - one) / p == pytest.approx(2 * math.exp(-z), rel=1e-4)
    p1, tail1 = trace_partial(z, cutoff=1)
    assert p1 == pytest.approx(one / (1 - math.exp(-2 * z)), rel=1e-15)
    assert tail1 >= p - p1 > 0


def test_sectors_add_up_to_full_trace():
    table = heisenberg_spectrum(400.0)
    for z in (0.5, 1.0):
        full, tail = table_trace(table, z, "all")
        band, _ = table_trace(table, z, "band")
        torus, _ = table_trace(table, z, "torus")
        assert full == pytest.approx(band + torus, rel=1e-14)
        assert band == pytest.approx(trace_partial(z)[0], rel=1e-12)
        assert trace_partial(z, table=table)[0] == band
        assert torus == pytest.approx(torus_theta(z), rel=1e-12)
        assert tail < 1e-80


def test_torus_theta_by_poisson():
    # sum_p exp(-2 pi z p^2) = (2 z)^(-1/2) sum_p exp(-pi p^2 / (2 z))
    for z in (0.05, 0.3, 1.0):
        dual = math.fsum(math.exp(-math.pi * p * p / (2 * z)) for p in range(-40, 41)) / math.sqrt(2 * z)
        assert torus_theta(z) == pytest.approx(dual ** 2, rel=1e-13)


def test_small_z_leading_behaviour():
    vals = {z: heisenberg_trace_closed(z) * z * z * 4 / math.pi ** 2 for z in (0.1, 0.05, 0.02)}
    # the -1/(2z) term gives 1 - 2 z / pi^2 up to exponentially small corrections
    for z, v in vals.items():
        assert v == pytest.approx(1 - 2 * z / math.pi ** 2, abs=1e-12)
        assert v == pytest.approx(trace_partial(z)[0] * z * z * 4 / math.pi ** 2, rel=1e-13)
    assert vals[0.1] < vals[0.05] < vals[0.02] < 1
    assert 0.999 <= heisenberg_trace_closed(0.004) * 0.004 ** 2 * 4 / math.pi ** 2 <= 1.001


def test_correction_series_bound():
    z = 0.5
    a = 2 * math.pi ** 2 / z
    series = math.fsum(1 / (1 + math.cosh(a * l)) for l in range(1, 4))
    assert 0 < series < math.pi ** 2 * math.exp(-a) * 1.01
    assert series <= 2 * math.exp(-a)


def test_complex_values_and_conjugation():
    for z, ref in BAND_TRACE_COMPLEX.items():
        p, _ = trace_partial(z)
        assert p == pytest.approx(ref, rel=1e-14)
        assert heisenberg_trace_closed(z) == pytest.approx(ref, rel=1e-13)
    for z in (0.3 + 0.5j, 0.1 + 2.0j, 1.0 - 0.7j):
        assert trace_partial(z.conjugate())[0] == pytest.approx(trace_partial(z)[0].conjugate(), rel=1e-15)
        assert heisenberg_trace_closed(z.conjugate()) == pytest.approx(
            heisenberg_trace_closed(z).conjugate(), rel=1e-15)


def test_tail_bounds():
    tails = [trace_partial(0.05, cutoff=M)[1] for M in (10, 50, 200, 800)]
    assert all(a > b for a, b in zip(tails, tails[1:]))
    exact = BAND_TRACE[0.1]
    for M in (5, 20, 80, 200):
        p, tail = trace_partial(0.1, cutoff=M)
        # sums near 241 carry ~1e-13 absolute rounding
        assert 0 <= exact - p <= tail + 1e-12
    # tiny Re z with a small cutoff: the bound reports the truncation
    p, tail = trace_partial(1e-4, cutoff=10)
    assert tail > 1e5 * abs(p)
    assert _closed_tail_bound(0.0, 3) == math.inf
    with pytest.raises(ValueError):
        trace_partial(-0.1)
    with pytest.raises(ValueError):
        trace_partial(0.5, cutoff=0)
    with pytest.raises(ValueError):
        heisenberg_trace_closed(0j)


def test_high_precision_paths():
    with mp.workdps(60):
        z = mp.mpf("0.15")
        a, _ = trace_partial(z, dps=60)
        b, bound = heisenberg_trace_closed(z, dps=60, return_bound=True)
        assert abs(a - b) < mp.mpf(10) ** -55
        assert bound < 1e-55
    assert float(a) == pytest.approx(trace_partial(0.15)[0], rel=1e-15)


def test_profile_invariants_and_csv():
    prof = trace_profile(Z_SET)
    for r, t in zip(prof.residuals, prof.tail_bounds):
        assert r <= t + 1e-10
    lines = prof.to_csv().splitlines()
    assert lines[0] == "re_z,im_z,partial_re,partial_im,closed_re,closed_im,residual,tail_bound"
    assert len(lines) == 1 + len(Z_SET)
    assert float(lines[3].split(",")[2]) == prof.partial[2].real


def test_length_extraction_heisenberg():
    est = heisenberg_trace_lengths()
    assert est.exponents[0] == pytest.approx(EXPONENT_1, rel=1e-10)
    assert est.lengths[0] == pytest.approx(LENGTH_1, rel=0.01)
    assert est.prefactor == pytest.approx(2 * math.pi ** 2, rel=1e-8)
    # the next correction exp(-4 pi^2 / z) belongs to the k = 2 orbit of length 4 pi
    assert len(est.lengths) == 2 and est.lengths[1] == pytest.approx(4 * math.pi, rel=1e-6)


def test_length_extraction_is_stable_under_refinement():
    coarse = heisenberg_trace_lengths([0.1 + 0.01 * i for i in range(11)])
    fine = heisenberg_trace_lengths([0.1 + 0.005 * i for i in range(21)])
    assert abs(fine.lengths[0] / coarse.lengths[0] - 1) < 2e-3
    closed = heisenberg_trace_lengths(use_closed_form=True)
    assert closed.lengths[0] == pytest.approx(coarse.lengths[0], rel=1e-12)


def test_length_extraction_synthetic():
    zs = [mp.mpf(1) / 10 + mp.mpf(i) / 100 for i in range(11)]
    with mp.workdps(50):
        vals = [mp.exp(-5 / z) for z in zs]
        est = extract_lengths(zs, vals, power=0, remainder=True, second=False)
        assert est.exponents[0] == pytest.approx(5.0, rel=1e-12)
        free = extract_lengths(zs, [v * z ** 3 for v, z in zip(vals, zs)], power=None, remainder=True)
        assert free.exponents[0] == pytest.approx(5.0, rel=1e-10)


def test_length_extraction_rejects_noise():
    zs = [0.1 + 0.01 * i for i in range(11)]
    with pytest.raises(ValueError, match="noise"):
        extract_lengths(zs, [trace_partial(z)[0] for z in zs])
    with pytest.raises(ValueError):
        extract_lengths([0.1, 0.2], [1.0, 2.0])


def test_pole_probe_resonant_directions():
    p = pole_probe(2 * math.pi)
    assert 1.8 <= p.exponent <= 2.2
    assert p.cutoff_sufficient
    assert p.cutoffs == [100, 200, 400]
    assert pole_probe(2 * math.pi / 3).exponent > 1.0
    # tau = pi sits where only the -1/(2 z) term resonates
    assert pole_probe(math.pi).exponent == pytest.approx(1.0, abs=0.01)


def test_pole_probe_generic_direction_values():
    p = pole_probe(1.0)
    # far smaller than on the resonant line, and well below its growth rate
    assert max(p.values) < 0.05 * min(pole_probe(2 * math.pi).values)
    assert p.exponent < 1.0
    # the converged modulus at eps = 0.025 against an mpmath reference
    v, tail = trace_partial(complex(0.025, 1.0))
    assert abs(v) == pytest.approx(ABS_BAND_TRACE_025_PLUS_I, rel=1e-12)
    assert abs(abs(p.values[-1]) - ABS_BAND_TRACE_025_PLUS_I) <= p.tail_bounds[-1]


def test_pole_probe_input_checks():
    with pytest.raises(ValueError):
        pole_probe(1.0, [0.1])
    with pytest.raises(ValueError, match="cutoff insufficient"):
        pole_probe(2 * math.pi, [0.1, 0.05], cutoff_rule=lambda e: 2)
