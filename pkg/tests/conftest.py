import numpy as np
import pytest

from biplanarct.projection import synthesize_biplanar, write_xray_pair
from biplanarct.volumes import (
    PhantomSpec,
    clip_normalize,
    generate_phantom,
    write_volume,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(directory, count, size=32, seed=0, implant_probability=0.5):
    """Write `count` paired phantom samples into `directory`."""
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        spec = PhantomSpec(size=size, seed=seed + i,
                           implant_probability=implant_probability)
        vol = generate_phantom(spec)
        path = directory / ("sample_%04d.ctv" % i)
        write_volume(vol, path)
        pair = synthesize_biplanar(clip_normalize(vol))
        write_xray_pair(pair, directory / ("sample_%04d.bxr" % i), vol.dims)
    return directory


@pytest.fixture
def dataset_factory(tmp_path):
    def factory(count, **kwargs):
        return make_dataset(tmp_path / "data", count, **kwargs)
    return factory
