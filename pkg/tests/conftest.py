from __future__ import annotations

import pytest

from trendnet.netsim import (
    Demand,
    DeviceSpec,
    LinkSpec,
    TopologySpec,
    TrafficProfile,
)

MBPS = 1_000_000


def diamond_topology(kind: str = "traditional", capacity_bps: int = 10 * MBPS) -> TopologySpec:
    """Four devices with two disjoint equal-length paths between edge subnets."""
    if kind == "traditional":
        ids = ["R1", "R2", "R3", "R4"]
        ips = ["10.0.0.11", "10.0.0.12", "10.0.0.13", "10.0.0.14"]
        ifn = lambda n: f"FastEthernet0_{n}"
        subnets = {"10.0.1.0/24": ("R1", ifn(0)), "10.0.2.0/24": ("R3", ifn(0))}
    else:
        ids = ["S1", "S2", "S3", "S4"]
        ips = ["10.0.0.21", "10.0.0.22", "10.0.0.23", "10.0.0.24"]
        ifn = lambda n: f"eth{n}"
        subnets = {"10.1.1.0/24": ("S1", ifn(0)), "10.1.2.0/24": ("S3", ifn(0))}
    a, b, c, d = ids
    return TopologySpec(
        devices=tuple(DeviceSpec(id=i, kind=kind, mgmt_ip=ip) for i, ip in zip(ids, ips)),
        links=(
            LinkSpec((a, ifn(1)), (b, ifn(1)), capacity_bps),
            LinkSpec((b, ifn(2)), (c, ifn(1)), capacity_bps),
            LinkSpec((a, ifn(2)), (d, ifn(1)), capacity_bps),
            LinkSpec((d, ifn(2)), (c, ifn(2)), capacity_bps),
        ),
        subnets=subnets,
    )


def steady_profile(
    src: str, dst: str, rate_bps: float, *, sigma: float = 0.0, seed: int = 7
) -> TrafficProfile:
    return TrafficProfile(
        demands=(
            Demand(
                src_prefix=src,
                dst_prefix=dst,
                hourly_mean_bps=tuple([rate_bps] * 24),
                noise_sigma_bps=sigma,
            ),
        ),
        rng_seed=seed,
    )


@pytest.fixture
def traditional_diamond() -> TopologySpec:
    return diamond_topology("traditional")


@pytest.fixture
def sdn_diamond() -> TopologySpec:
    return diamond_topology("sdn-switch")


# ---------------------------------------------------------------------------
# Acceptance summary: one PASS/FAIL line per criterion after the run.

_ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def record_acceptance(criterion: str, title: str, outcome: str) -> None:
    _ACCEPTANCE_RESULTS[criterion] = (title, outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE_RESULTS, key=lambda c: int(c)):
        title, outcome = _ACCEPTANCE_RESULTS[criterion]
        terminalreporter.write_line(f"criterion {criterion:>2}: {outcome:4s}  {title}")
