"""
End-to-end properties of the cipher, the attacks and the encrypted-domain ViT.

The learnability experiment is marked slow (about ten minutes on one core).
"""

import itertools
import math

import numpy as np
import pytest

from app.attacks import AttackKind, leading_bit_attack, minimum_difference_attack, run_attack
from app.codec import STAGE_FLAGS, CipherConfig, decrypt, encrypt
from app.metrics import adjacent_correlation, key_sensitivity, npcr, shannon_entropy
from app.pipeline import generate_synthetic
from app.samples import natural_scene, natural_scenes
from app.train import TrainConfig, learnability_experiment
from app.vit import Batch, ViTConfig, forward_loss, init_params
from tests.golden import frozen_digest, golden_digest
from tests.sample_images import channel_ramp_image, dark_image, fixed_key, random_image

FLAG_COMBINATIONS = [dict(zip(STAGE_FLAGS, combo)) for combo in itertools.product([False, True], repeat=4)]
SIZES = (16, 64, 256)
GRIDS = (2, 4, 8)


def test_round_trip_is_exact_across_sizes_grids_and_stages():
    key = fixed_key()
    for i in range(100):
        size, grid = SIZES[i % 3], GRIDS[(i // 3) % 3]
        img = random_image(size, size, channels=1 if i % 10 == 9 else 3, seed=i)
        config = CipherConfig.from_flags(grid, grid, FLAG_COMBINATIONS[i % 16])

        assert decrypt(encrypt(img, key, config), key) == img, f"image {i}: {size}px, {config.describe()}"


def test_golden_ciphertext_digest():
    digest = golden_digest()
    assert digest == golden_digest()

    assert frozen_digest() is not None, "tests/data/golden_vector.json has no frozen digest"
    assert digest == frozen_digest()


def test_one_bit_key_flip_changes_almost_every_pixel():
    result = key_sensitivity(natural_scene(256, 256, seed=3), fixed_key(), CipherConfig(), flip_bits=1)

    assert result.npcr >= 0.95


@pytest.mark.parametrize("kind", list(AttackKind))
def test_attacks_fail_on_the_full_pipeline(kind):
    key = fixed_key()
    for i, plain in enumerate(natural_scenes(20, size=64, seed=100)):
        report = run_attack(encrypt(plain, key, CipherConfig()), kind, plain)

        assert report.ssim_vs_plain < 0.2, f"scene {i}"
        assert report.npcr_vs_plain >= 0.90, f"scene {i}"


def test_leading_bit_recovers_negpos_only_ciphertext():
    plain = dark_image(64, 64, seed=5)
    enc = encrypt(
        plain,
        fixed_key(),
        CipherConfig().with_stages(pixel_scramble=False, block_shuffle=False, negpos=True, channel_shuffle=False),
    )

    assert 1.0 - npcr(plain, leading_bit_attack(enc, mode="pixel")) >= 0.99


@pytest.mark.parametrize("size,grid", [(16, 2), (24, 3)])
def test_minimum_difference_recovers_block_shuffle_only_ciphertext(size, grid):
    plain = channel_ramp_image(size)
    config = CipherConfig(grid, grid).with_stages(
        pixel_scramble=False, block_shuffle=True, negpos=False, channel_shuffle=False
    )

    assert minimum_difference_attack(encrypt(plain, fixed_key(), config)) == plain


def test_ciphertext_statistics():
    plain = natural_scene(256, 256, seed=7)
    cipher = encrypt(plain, fixed_key(), CipherConfig()).tensor

    for direction in ("horizontal", "vertical"):
        assert adjacent_correlation(plain, direction).value >= 0.7
        assert abs(adjacent_correlation(cipher, direction).value) <= 0.1
    assert shannon_entropy(cipher) >= shannon_entropy(plain) - 0.01


def _desk_scale_config():
    return ViTConfig(
        image_h=16,
        image_w=16,
        channels=3,
        patch_size=4,
        embed_dim=32,
        num_heads=4,
        num_layers=2,
        mlp_dim=64,
        num_classes=2,
        use_positional_embedding=False,
        seed=0,
    )


def test_initial_loss_with_zero_head_is_ln2():
    shard = generate_synthetic(16, classes=2, size=16, seed=0)
    batch = Batch.from_images(shard.images, shard.labels)
    config = _desk_scale_config()

    loss, _ = forward_loss(batch, init_params(config), config)

    assert abs(loss - math.log(2)) <= 1e-12


@pytest.mark.slow
def test_encrypted_domain_learnability():
    report = learnability_experiment(
        _desk_scale_config(),
        TrainConfig(epochs=30, batch_size=32, learning_rate=1e-3, optimizer="adam", seed=0),
        num_per_class=250,
        val_fraction=0.2,
        clients=3,
        seed=0,
    )

    summary = report.summary()
    assert len(report.arms["plain"].epochs) == 30
    assert summary["shared_key"]["best_val_acc"] >= 0.90
    assert summary["plain"]["best_val_acc"] - summary["shared_key"]["best_val_acc"] <= 0.05
    assert 0.0 <= summary["distinct_keys"]["final_val_acc"] <= 1.0
    assert np.isfinite(report.arms["distinct_keys"].epochs[-1].train_loss)
