import numpy as np
import pytest

from baseline_cea.trial_data import TimeSchedule, TrialDataset


def make_dataset(u, c, arm=None, deltas=None, has_baseline_cost=True, **kw):
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    n, width = u.shape
    if arm is None:
        arm = np.arange(n) % 2
    sched = TimeSchedule(deltas if deltas is not None else (1.0 / (width - 1),) * (width - 1))
    return TrialDataset(ids=[f"p{i}" for i in range(n)], arm=arm, site=kw.pop("site", np.zeros(n, int)),
                        utilities=u, costs=c, schedule=sched,
                        has_baseline_cost=has_baseline_cost, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
