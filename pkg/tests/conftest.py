import pytest

from aiva.config import ModelConfig
from aiva.datasets import SynthSpec, split_records, synth_generate
from aiva.training import TrainConfig, load_checkpoint, save_result, train


@pytest.fixture(scope="session")
def demo_checkpoint_path(tmp_path_factory):
    """A small trained checkpoint shared by service/CLI-level tests."""
    records = synth_generate(SynthSpec(n_classes=3, samples_per_class=16,
                                       image_size=16, seed=13))
    cfg = TrainConfig(
        learning_rate=1e-3, batch_size=4, epochs=2, seed=0,
        model=ModelConfig(d_model=16, n_heads=4, n_text_layers=1, n_vis_layers=1,
                          n_fusion_layers=1, max_len=8, image_size=16, patch_size=8,
                          n_classes=3))
    result = train(cfg, split_records(records, "train"), split_records(records, "val"))
    path = tmp_path_factory.mktemp("ckpt") / "demo.ckpt"
    save_result(result, path)
    return path


@pytest.fixture(scope="session")
def demo_checkpoint(demo_checkpoint_path):
    return load_checkpoint(demo_checkpoint_path)
