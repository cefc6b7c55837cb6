import pytest

from meshforge.decimate import SimplifyConfig, simplify
from meshforge.primitives import icosphere


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    # first simplify() call may JIT-compile the kernel; keep that cost out
    # of every timing assertion in the suite
    simplify(icosphere(1), SimplifyConfig(target_vertices=20))
