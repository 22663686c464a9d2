"""One test per acceptance criterion; each records a PASS/FAIL line.

The lines are repeated in the pytest terminal summary. Criteria 2, 3 and 7
run the full Monte Carlo workloads (about 7 minutes together on one core).
"""

import pytest

from conftest import ACCEPTANCE_LINES
from mmtrack import acceptance


def _record(result):
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.passed, line


def test_criterion_1_jakes_correlation():
    _record(acceptance.check_jakes())


@pytest.mark.slow
def test_criterion_2_tracking_gain():
    _record(acceptance.check_tracking_gain())


@pytest.mark.slow
def test_criterion_3_correlation_ordering():
    _record(acceptance.check_correlation_ordering())


def test_criterion_4_overhead_budget():
    _record(acceptance.check_overhead())


def test_criterion_5_oracle_equivalence():
    _record(acceptance.check_oracles())


def test_criterion_6_hardware_and_power_constraints():
    _record(acceptance.check_constraints())


@pytest.mark.slow
def test_criterion_7_static_channel_monotonicity():
    _record(acceptance.check_static_channel())


def test_criterion_8_exhaustive_codebook_design():
    _record(acceptance.check_codebook_design())


def test_criterion_9_deterministic_output():
    _record(acceptance.check_determinism())
