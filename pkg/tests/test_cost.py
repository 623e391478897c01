import pytest

from secquant.mpc.cost import (
    PROTOCOLS,
    CostModel,
    cost_report,
    measure,
    ots_per_bit,
    symbolic_counts,
)
from secquant.mpc.ledger import BITS_PER_MIB
from secquant.ring import ParameterError

LENET_KSQ_BITS = 73024

# inter-server MiB for LeNet/KSQ: (offline exact, online exact, offline approx, online approx)
PUBLISHED_LENET = {
    (20, "approach1"): (644.50, 12.90, 620.27, 12.90),
    (20, "approach2"): (644.50, 0.59, 620.27, 0.59),
    (20, "approach3"): (89.77, 0.59, 65.54, 0.59),
    (100, "approach1"): (3222.51, 64.51, 3101.36, 64.51),
    (100, "approach2"): (3222.51, 0.59, 3101.36, 0.59),
    (100, "approach3"): (332.08, 0.59, 210.93, 0.59),
    (500, "approach1"): (16112.56, 322.56, 15506.80, 322.56),
    (500, "approach2"): (16112.56, 0.59, 15506.80, 0.59),
    (500, "approach3"): (1543.62, 0.59, 937.85, 0.59),
}

# total MiB for summing 1000 bits per client
PUBLISHED_BITSUM = {
    ("prio+", "exact"): (9.45, 94.50, 945.04, 9450.44),
    ("global", "exact"): (3.94, 39.42, 394.17, 3941.66),
    ("global", "approx"): (2.37, 23.75, 237.45, 2374.53),
}


def test_symbolic_counts_table():
    n = 7
    assert symbolic_counts("approach1", n) == {"BitA_pre": n, "Mult_pre": n, "BitA_on": n, "Mult_on": n}
    assert symbolic_counts("approach2", n) == {"BitA_pre": n, "Mult_pre": n, "BitA_on": 0, "Mult_on": 1}
    assert symbolic_counts("approach3", n) == {"BitA_pre": n, "Mult_pre": 1, "BitA_on": 0, "Mult_on": 1}
    assert symbolic_counts("global", n) == {"BitA_pre": n, "Mult_pre": 0, "BitA_on": 0, "Mult_on": 1}
    with pytest.raises(ParameterError):
        symbolic_counts("prio+", n)


def test_ots_per_bit():
    assert ots_per_bit(3, "exact") == 5
    assert ots_per_bit(3, "approx") == 3
    assert ots_per_bit(2, "exact") == ots_per_bit(2, "approx") == 1


def test_online_multiplication_price():
    assert CostModel().mult_on_bits == 64
    assert CostModel(q=4).mult_on_bits == 96


@pytest.mark.parametrize("key", sorted(PUBLISHED_LENET))
def test_lenet_costs_within_tolerance(key):
    n, protocol = key
    want = PUBLISHED_LENET[key]
    exact = cost_report(protocol, n, LENET_KSQ_BITS, "exact")
    approx = cost_report(protocol, n, LENET_KSQ_BITS, "approx")
    got = (exact.offline_mib, exact.online_mib, approx.offline_mib, approx.online_mib)
    for g, w in zip(got, want):
        assert abs(g / w - 1) <= 0.25


@pytest.mark.parametrize("key", sorted(PUBLISHED_BITSUM))
def test_bit_sum_costs_within_tolerance(key):
    protocol, mode = key
    for n, want in zip((10**2, 10**3, 10**4, 10**5), PUBLISHED_BITSUM[key]):
        got = cost_report(protocol, n, 1000, mode).total_mib
        assert abs(got / want - 1) <= 0.25


def test_approximation_saves_offline_only():
    exact = cost_report("approach3", 100, 1000, "exact")
    approx = cost_report("approach3", 100, 1000, "approx")
    assert approx.offline_mib < exact.offline_mib
    assert approx.online_mib == exact.online_mib


def test_report_fields():
    report = cost_report("approach3", 10, 8, "approx")
    data = report.as_dict()
    assert data["total_mib"] == pytest.approx(report.offline_mib + report.online_mib)
    assert report.online_mib == pytest.approx(8 * 64 / BITS_PER_MIB)
    with pytest.raises(ParameterError):
        cost_report("approach9", 1, 1)
    with pytest.raises(ParameterError):
        cost_report("approach1", 0, 1)


@pytest.mark.parametrize("protocol", ["approach2", "approach3", "global"])
def test_measured_online_constant_in_clients(protocol):
    online = {measure(protocol, n, 3).bits("online") for n in (1, 5, 12)}
    assert len(online) == 1


def test_measured_online_structure():
    # two openings (bit sums, then the product); each sends q shares to S1 and q - 1 relays
    m = 5
    ledger = measure("approach3", 4, m)
    assert ledger.bits("online") == 2 * m * 32 * 5
    assert ledger.bits("online", include_self=False) == 2 * m * 2 * CostModel().mult_on_bits


@pytest.mark.parametrize("mode,ots", [("exact", 5), ("approx", 3)])
def test_measured_conversion_ots(mode, ots):
    ledger = measure("global", 3, 4, mode)
    assert ledger.ops[("preprocessing", f"OT/bita/{mode}")] == 3 * 4 * ots


def test_measure_rejects_prio():
    assert "prio+" in PROTOCOLS
    with pytest.raises(ParameterError):
        measure("prio+", 2, 2)
