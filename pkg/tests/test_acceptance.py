"""Acceptance gate: each criterion runs at its stated tolerance and
prints one pass/fail line.  The benchmark pipeline runs once per session
(criterion 11 re-runs it for the determinism comparison)."""

from pathlib import Path

import pytest

from wiedlab import acceptance as acc

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "combustion-1d.json"


@pytest.fixture(scope="session")
def ctx(tmp_path_factory):
    return acc.AcceptanceContext(CONFIG,
                                 workdir=tmp_path_factory.mktemp("acceptance"))


@pytest.mark.parametrize("criterion", acc.ALL_CRITERIA,
                         ids=[c.__name__.replace("criterion_", "")
                              for c in acc.ALL_CRITERIA])
def test_acceptance_criterion(ctx, criterion):
    result = criterion(ctx)
    status = "PASS" if result.passed else "FAIL"
    print(f"\n[acceptance] {result.name}: {status} -- {result.detail}")
    assert result.passed, f"{result.name}: {result.detail}"
