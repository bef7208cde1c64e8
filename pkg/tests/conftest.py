import numpy as np
import pytest

from sddebif.linstab import hopf_theta_at, hopf_theta_at_beta
from sddebif.orbit import Condition, adapt_mesh, hopf_initial_guess, solve_po


def march_from_hopf(fixed, value, target, growth=1.3, eps=0.05, b=0.0):
    """Converged orbit at ``fixed=value`` and the other parameter at ``target``.

    Starts next to H and grows the amplitude (pinned at ``s = 0``) with the
    free parameter solved for, until the free parameter passes ``target``;
    then re-solves at ``target`` with the default phase condition.
    """
    free = "alpha" if fixed == "beta" else "beta"
    theta = hopf_theta_at_beta(value) if fixed == "beta" else hopf_theta_at(value)
    params, guess = hopf_initial_guess(theta, eps, b)
    params = params.replace(**{fixed: value})
    amp = eps
    po = solve_po(params, guess, phase="pin", free=(free,), conditions=[Condition(0.0, amp)])
    start = po.params.get(free)
    sign = np.sign(target - start)
    while sign * (target - po.params.get(free)) > 0:
        amp *= growth
        po = solve_po(po.params, po, phase="pin", free=(free,), conditions=[Condition(0.0, amp)])
        po = adapt_mesh(po)
    return solve_po(po.params.replace(**{free: target}), po)


@pytest.fixture(scope="session")
def stable_orbit():
    return march_from_hopf("beta", -1.7, -0.1)


@pytest.fixture(scope="session")
def unstable_orbit():
    return march_from_hopf("alpha", 0.3, -1.1)


_acceptance_lines = []


@pytest.fixture
def report():
    """Print one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def _report(number, ok, detail):
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _acceptance_lines.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
