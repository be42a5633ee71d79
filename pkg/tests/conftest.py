from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hpa_delay.model import ModelParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

EX21 = ModelParams(A=1.0, p2=15.0, p3=7.2, p4=0.05, p5=0.11, p6=2.9)
EX22 = ModelParams(A=0.106, p2=0.0, p3=0.222, p4=0.464, p5=0.094, p6=0.418)
FIG6 = ModelParams(A=1.5, p2=1.8, p3=0.2, p4=5.0, p5=0.11, p6=0.9)
EX34A = ModelParams(A=1.0, p2=11.0, p3=1.2, p4=0.05, p5=0.11, p6=2.9, tau=4.0)
EX34B = ModelParams(A=1.0, p2=7.0, p3=1.2, p4=0.05, p5=0.51, p6=3.1, tau=4.0)
EX31 = dict(p3=0.41, p6=0.91, K2=0.81, K3=0.41)
# generic parameters whose fixed point loses stability near tau = 1.04
HOPF = ModelParams(A=2.6637, p2=4.9376, p3=0.1982, p4=2.4238, p5=0.0162, p6=0.656)


def random_generic(rng, lo=-3.0, hi=1.0, tau=0.0) -> ModelParams:
    v = 10.0 ** rng.uniform(lo, hi, 6)
    return ModelParams(*v, tau=tau)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
