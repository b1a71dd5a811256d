import numpy as np
import pytest

import percgames as pg


def named_families():
    """One representative per named offspring family."""
    return [
        pg.Binomial(3, 0.8),
        pg.Poisson(2.5),
        pg.NegativeBinomial(3, 0.4),
        pg.Geometric(0.5),
        pg.ZeroOrD(2, 0.7),
        pg.Dirac(2),
    ]


def all_variants():
    return named_families() + [
        pg.Dirac(1),
        pg.NegativeBinomial(1, 0.5),
        pg.FiniteSupport([0.2, 0.3, 0.5]),
    ]


def random_params(rng, lo=0.01, hi=0.99) -> pg.ParamPair:
    """Uniform draw from the parameter set, with p + q kept in [lo, hi]."""
    s = rng.uniform(lo, hi)
    u = rng.uniform(0.0, 1.0)
    return pg.ParamPair(u * s, (1.0 - u) * s)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
