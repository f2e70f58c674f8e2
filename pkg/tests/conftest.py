import json
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from cavopt.assembly import assemble, build_space
from cavopt.geometry import family_from_dict
from cavopt.pipeline import Snapshot
from cavopt.splines import KnotVector, identity_net

FIXTURES = Path(__file__).parent / "fixtures"

# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def unit_square_net():
    kv = KnotVector(1, [0.0, 0.0, 1.0, 1.0])
    return identity_net(kv, kv)


class StubPipeline:
    """Two decoupled modes whose first eigenvalue is a prescribed function of ``p``."""

    analytic = True

    def __init__(self, lam, dlam, n_params=2):
        self.lam, self.dlam, self.n_params = lam, dlam, n_params

    def solve(self, p):
        lam = self.lam(p)
        sol = SimpleNamespace(eigenvalues=np.array([lam, 4 * lam]), eigenvectors=np.eye(2))
        return Snapshot(np.asarray(p, dtype=float), sol, np.eye(2))

    def eigen_derivative(self, snap, k, delta=None):
        return SimpleNamespace(dlam=self.dlam(snap.p))


@pytest.fixture(scope="session")
def chain_fixture():
    data = json.loads((FIXTURES / "chain_nominal.json").read_text())
    return family_from_dict(data["family"]), np.array(data["p"]), data["net"]


@pytest.fixture(scope="session")
def unit_square_scalar():
    net = unit_square_net()
    space = build_space(net, "scalar", 2, subdivisions=(16, 16))
    return space, net, assemble(space, net)
