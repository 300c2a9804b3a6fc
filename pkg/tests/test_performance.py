"""
Performance benchmarks for the cipher, the attacks and the ViT step.
"""

import pytest

from app.attacks import AttackKind, run_attack
from app.codec import CipherConfig, decrypt, encrypt
from app.keyschedule import StageTag, derive_stream, gen_permutation
from app.metrics import compare_images
from app.samples import natural_scene
from app.vit import Batch, ViTConfig, init_params, loss_and_gradients
from tests.sample_images import fixed_key


@pytest.fixture(scope="module")
def scene():
    """A 256x256 scene, the size used by the demo."""
    return natural_scene(256, 256, seed=42)


def test_encrypt_performance(benchmark, scene):
    result = benchmark(encrypt, scene, fixed_key(), CipherConfig())

    assert result.tensor.shape == scene.shape


def test_decrypt_performance(benchmark, scene):
    enc = encrypt(scene, fixed_key(), CipherConfig())

    result = benchmark(decrypt, enc, fixed_key())

    assert result == scene


def test_permutation_generation_performance(benchmark):
    def draw():
        return gen_permutation(derive_stream(fixed_key(), StageTag.PIXEL_SCRAMBLE, 0), 4096)

    result = benchmark(draw)

    assert len(result) == 4096


def test_combined_attack_performance(benchmark):
    plain = natural_scene(64, 64, seed=1)
    enc = encrypt(plain, fixed_key(), CipherConfig(4, 4))

    report = benchmark(run_attack, enc, AttackKind.COMBINED, plain)

    assert report.reconstructed.shape == plain.shape


def test_metrics_performance(benchmark, scene):
    enc = encrypt(scene, fixed_key(), CipherConfig()).tensor

    result = benchmark(compare_images, scene, enc)

    assert 0.0 <= result.npcr <= 1.0


def test_vit_training_step_performance(benchmark):
    config = ViTConfig(16, 16, 3, 4, 32, 4, 2, 64, 2)
    params = init_params(config)
    batch = Batch.from_images([natural_scene(16, 16, seed=i) for i in range(32)], [i % 2 for i in range(32)])

    loss, _, _ = benchmark(loss_and_gradients, batch, params, config)

    assert loss > 0


@pytest.mark.parametrize("grid", [2, 4, 8])
def test_round_trip_scales_with_grid(grid, scene):
    """Round trips stay exact at every block count."""
    enc = encrypt(scene, fixed_key(), CipherConfig(grid, grid))

    assert decrypt(enc, fixed_key()) == scene
