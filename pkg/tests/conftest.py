import pytest

from ateaug.data import SyntheticSpec, generate_synthetic_dataset
from ateaug.model import build_model

from helpers import as64, tiny_config


@pytest.fixture
def tiny():
    cfg = tiny_config()
    return cfg, as64(build_model(cfg, seed=3))


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SyntheticSpec(n_classes=2, clips_per_class=4, class_tones=((400,), (2000,)),
                         noise_level=0.1, seed=5)
    manifest, entries, classes = generate_synthetic_dataset(spec, str(out))
    return out, manifest, entries, classes
