import pathlib

import pytest

from posgp import (
    DiagMonoMatrix,
    Monomial,
    ParamSystem,
    PosyMatrix,
    Posynomial,
    VarSpace,
    build_hinf_gp,
    solve,
)
from posgp.synth import CostSpec, ThetaSet

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Trigger kernel JIT compilation once so timed tests measure solves only."""
    vs = VarSpace(["th"])
    ps = ParamSystem(
        vs,
        PosyMatrix(1, 1),
        DiagMonoMatrix((Monomial.var("th"),)),
        PosyMatrix.from_numeric([[1.0]]),
        PosyMatrix.from_numeric([[1.0]]),
    )
    cost = CostSpec(Posynomial.var("th"))
    theta = ThetaSet((Posynomial.var("th") * 0.2,))
    solve(build_hinf_gp(ps, cost, theta, 0.5))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
