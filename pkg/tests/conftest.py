import numpy as np
from pytest import fixture

from latentknn.obsdata import ObservationMatrix
from latentknn.synthgen import LatentModelSpec, NoiseSpec, UniformCube, sample_instance


@fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    "Keep every test away from the real user settings file."
    config_dir = tmp_path / "config"
    monkeypatch.setenv("LATENTKNN_CONFIG_DIR", str(config_dir))
    return config_dir


@fixture
def worked_matrix():
    "Row 1 sees (1, 2, -), row 2 sees (0, 1, 5): the 2x3 hand-worked instance."
    return ObservationMatrix.from_dense(np.array([
        [1.0, 2.0, np.nan],
        [0.0, 1.0, 5.0],
    ]))


def random_matrix(m, n, p, seed, low=-1.0, high=1.0):
    "Uniform values on a Bernoulli(p) mask."
    rng = np.random.default_rng(seed)
    values = rng.uniform(low, high, size=(m, n))
    values[rng.random((m, n)) >= p] = np.nan
    return ObservationMatrix.from_dense(values)


def synthetic(latent_fn="additive", m=30, n=30, p=0.5, seed=0, noise=None, measure=None):
    spec = LatentModelSpec(
        shape=(m, n),
        latent_fn=latent_fn,
        measure=measure or UniformCube(1),
        noise=noise or NoiseSpec(),
        p=p,
        seed=seed,
    )
    return sample_instance(spec)
