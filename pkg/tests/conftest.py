import numpy as np
import pytest
from hypothesis import strategies as st

from mvsr.expr import BINARY_OPS, UNARY_OPS, Binary, Const, Unary, Var, size


def random_expression(rng, max_size=15, n_vars=1, ops=UNARY_OPS + BINARY_OPS, lo=-2.0, hi=2.0):
    """Random tree with at most ``max_size`` nodes and constants in [lo, hi]."""
    unary = [o for o in ops if o in UNARY_OPS]
    binary = [o for o in ops if o in BINARY_OPS]

    def grow(budget):
        if budget <= 1 or rng.random() < 0.25:
            if rng.random() < 0.5:
                return Var(int(rng.integers(n_vars)))
            return Const(float(rng.uniform(lo, hi)))
        if budget >= 3 and rng.random() < 0.6:
            left = int(rng.integers(1, budget - 1))
            op = binary[int(rng.integers(len(binary)))]
            return Binary(op, grow(left), grow(budget - 1 - left))
        op = unary[int(rng.integers(len(unary)))]
        return Unary(op, grow(budget - 1))

    return grow(int(rng.integers(1, max_size + 1)))


_leaf = st.one_of(
    st.builds(Var, st.integers(0, 2)),
    st.builds(Const, st.floats(-5, 5, allow_nan=False, allow_infinity=False)),
)


def _extend(children):
    return st.one_of(
        st.builds(Unary, st.sampled_from(UNARY_OPS), children),
        st.builds(Binary, st.sampled_from(BINARY_OPS), children, children),
    )


expressions = st.recursive(_leaf, _extend, max_leaves=10).filter(lambda e: size(e) <= 25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
