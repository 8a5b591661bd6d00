import numpy as np
import pytest

from adeval_bridge import ExportSession


@pytest.fixture
def rng():
    return np.random.default_rng(61505)


@pytest.fixture
def separable_session(tmp_path, rng):
    """Builder for sessions whose scores and maps separate perfectly.

    Bad samples score in [0.7, 0.9] with anomalous pixels in [0.7, 1.0];
    good samples score in [0.1, 0.25] with every pixel below 0.3. Image and
    pixel rankings are therefore perfect by construction.
    """

    def build(map_format="raw", subdir="session"):
        session = ExportSession(
            tmp_path / subdir, category="widget", map_format=map_format, resolution=16
        )
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:10, 5:12] = 1
        for i in range(4):
            heat = rng.uniform(0.0, 0.3, size=(16, 16))
            heat[mask == 1] = rng.uniform(0.7, 1.0, size=int(mask.sum()))
            session.add_sample(f"bad_{i}", "bad", 0.7 + 0.05 * i, map=heat, mask=mask)
        for i in range(4):
            heat = rng.uniform(0.0, 0.3, size=(16, 16))
            session.add_sample(f"good_{i}", "good", 0.1 + 0.05 * i, map=heat)
        return session

    return build
