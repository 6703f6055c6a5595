import pytest

from props import PROPERTIES, SEEDS


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", list(PROPERTIES))
def test_property(name, seed):
    residual, tol = PROPERTIES[name](seed)
    assert residual < tol, f"{name} seed {seed}: {residual:.3e} >= {tol:.1e}"
