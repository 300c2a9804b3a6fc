"""
Tests for the block-pixel cipher stages, the full encrypt/decrypt path and ciphertext files.
"""

import itertools
import json

import numpy as np
import pytest

from app.codec import (
    STAGE_FLAGS,
    CipherConfig,
    EncryptedImage,
    block_permutation,
    channel_shuffle,
    channel_unshuffle,
    cipher_paths,
    cipher_targets,
    cipher_stem,
    decrypt,
    encrypt,
    load_encrypted,
    negpos_bits,
    negpos_transform,
    save_encrypted,
    scramble_patch,
    shuffle_blocks,
    unscramble_patch,
    unshuffle_blocks,
)
from app.error_handler import DataFormatError, DimensionMismatchError, InvalidArgumentError, WrongKeyError
from app.imagecore import ImageTensor, Patch, PatchGrid, split_into_patches
from app.keyschedule import MasterKey, Permutation
from tests.sample_images import fixed_key, gradient_image, random_image

ALL_FLAG_COMBINATIONS = [dict(zip(STAGE_FLAGS, combo)) for combo in itertools.product([False, True], repeat=4)]


@pytest.fixture
def key():
    return fixed_key()


@pytest.mark.parametrize("flags", ALL_FLAG_COMBINATIONS, ids=lambda f: "-".join(k for k, v in f.items() if v) or "none")
def test_round_trip_every_stage_combination(key, flags):
    img = random_image(32, 32, seed=7)
    config = CipherConfig.from_flags(4, 4, flags)

    enc = encrypt(img, key, config)

    assert decrypt(enc, key) == img


def test_round_trip_grayscale_records_notice(key):
    img = gradient_image(16, 16)

    enc = encrypt(img, key, CipherConfig(2, 2))

    assert enc.notices == ("channel_shuffle skipped: single-channel image",)
    assert decrypt(enc, key) == img


def test_round_trip_rectangular_grid(key):
    img = random_image(12, 30, seed=8)

    enc = encrypt(img, key, CipherConfig(3, 5))

    assert enc.grid == PatchGrid(3, 5, 4, 6)
    assert decrypt(enc, key) == img


def test_encryption_is_deterministic(key):
    img = random_image(16, 16, seed=9)

    assert encrypt(img, key, CipherConfig()).tensor == encrypt(img, key, CipherConfig()).tensor


def test_different_keys_give_different_ciphertexts(key):
    img = random_image(16, 16, seed=10)

    first = encrypt(img, key, CipherConfig(2, 2)).tensor
    second = encrypt(img, key.flip_bit(0), CipherConfig(2, 2)).tensor

    assert first != second


def test_all_stages_disabled_is_identity(key):
    img = random_image(16, 16, seed=11)

    assert encrypt(img, key, CipherConfig.preset("none")).tensor == img


def test_pixel_shuffle_preset_keeps_pixels_intact(key):
    img = random_image(16, 16, seed=12)

    enc = encrypt(img, key, CipherConfig.preset("pixel-shuffle", 4, 4))

    assert (enc.config.grid_rows, enc.config.grid_cols) == (1, 1)
    original = {tuple(p) for p in img.data.reshape(-1, 3)}
    shuffled = {tuple(p) for p in enc.tensor.data.reshape(-1, 3)}
    assert original == shuffled
    assert decrypt(enc, key) == img


def test_unknown_preset():
    with pytest.raises(InvalidArgumentError):
        CipherConfig.preset("rot13")


def test_grid_must_divide_image(key):
    with pytest.raises(DimensionMismatchError):
        encrypt(random_image(10, 10), key, CipherConfig(4, 4))


def test_wrong_key_refused_unless_forced(key):
    img = random_image(16, 16, seed=13)
    enc = encrypt(img, key, CipherConfig(2, 2))
    other = MasterKey.from_seed(1, "other")

    with pytest.raises(WrongKeyError):
        decrypt(enc, other)
    forced = decrypt(enc, other, force=True)
    assert forced.shape == img.shape
    assert forced != img


def test_scramble_patch_moves_whole_pixels():
    data = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3)
    perm = Permutation(np.array([3, 0, 1, 2]))

    scrambled = scramble_patch(Patch(0, data), perm)

    assert scrambled.data.reshape(4, 3).tolist() == data.reshape(4, 3)[[3, 0, 1, 2]].tolist()
    assert np.array_equal(unscramble_patch(scrambled, perm).data, data)


def test_scramble_patch_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        scramble_patch(Patch(0, np.zeros((2, 2, 3), dtype=np.uint8)), Permutation.identity(3))


def test_shuffle_blocks_places_input_by_mapping():
    img = random_image(8, 8, seed=14)
    grid = PatchGrid.for_image(img, 2, 2)
    patches = split_into_patches(img, grid)
    perm = Permutation(np.array([2, 0, 3, 1]))

    shuffled = shuffle_blocks(patches, perm)

    assert [p.index for p in shuffled] == [2, 0, 3, 1]
    assert [p.index for p in unshuffle_blocks(shuffled, perm)] == [0, 1, 2, 3]


def test_negpos_is_an_involution():
    img = random_image(8, 8, seed=15)
    bits = np.zeros(64, dtype=np.uint8)
    bits[[0, 9, 63]] = 1

    flipped = negpos_transform(img, bits)

    assert np.array_equal(flipped.data[0, 0], 255 - img.data[0, 0])
    assert np.array_equal(flipped.data[0, 1], img.data[0, 1])
    assert negpos_transform(flipped, bits) == img


def test_negpos_bit_count_mismatch():
    with pytest.raises(DimensionMismatchError):
        negpos_transform(random_image(4, 4), np.zeros(15, dtype=np.uint8))


def test_channel_shuffle_per_pixel():
    data = np.array([[[10, 20, 30], [40, 50, 60]]], dtype=np.uint8)
    perms = np.array([[2, 0, 1], [0, 1, 2]])

    shuffled = channel_shuffle(ImageTensor(data), perms)

    assert shuffled.data.tolist() == [[[30, 10, 20], [40, 50, 60]]]
    assert channel_unshuffle(shuffled, perms) == ImageTensor(data)


def test_channel_shuffle_accepts_permutation_list():
    img = random_image(1, 2, seed=16)
    perms = [Permutation(np.array([1, 2, 0])), Permutation(np.array([2, 1, 0]))]

    shuffled = channel_shuffle(img, perms)

    assert shuffled.data[0, 0].tolist() == img.data[0, 0, [1, 2, 0]].tolist()
    assert shuffled.data[0, 1].tolist() == img.data[0, 1, [2, 1, 0]].tolist()


def test_channel_shuffle_passes_grayscale_through():
    img = gradient_image(4, 4)

    assert channel_shuffle(img, np.zeros((16, 1), dtype=np.int64)) == img


def test_stage_material_comes_from_the_key(key):
    grid = PatchGrid(2, 2, 4, 4)

    assert block_permutation(key, grid) == block_permutation(fixed_key(), grid)
    assert not np.array_equal(negpos_bits(key, 256), negpos_bits(key.flip_bit(100), 256))


def test_sidecar_contents(key):
    img = random_image(16, 16, seed=17)

    sidecar = encrypt(img, key, CipherConfig(2, 2)).to_sidecar()

    assert sidecar["scheme_version"] == 1
    assert (sidecar["grid_rows"], sidecar["grid_cols"], sidecar["patch_h"], sidecar["patch_w"]) == (2, 2, 8, 8)
    assert sidecar["key_id"] == key.key_id
    assert sidecar["source_digest"] == img.digest()
    assert all(sidecar[flag] is True for flag in STAGE_FLAGS)


def test_record_digest_can_be_disabled(key):
    enc = encrypt(random_image(16, 16), key, CipherConfig(2, 2), record_digest=False)

    assert enc.source_digest is None


def test_save_and_load_encrypted(tmp_path, key):
    img = random_image(16, 24, seed=18)
    enc = encrypt(img, key, CipherConfig(2, 3))
    png, meta = cipher_paths(tmp_path / "photo.png")

    written, sidecar = save_encrypted(enc, png)

    assert written.name == "photo.enc.png" and sidecar.name == "photo.enc.json"
    loaded = load_encrypted(written)
    assert loaded == enc
    assert decrypt(loaded, key) == img


def test_load_encrypted_requires_sidecar(tmp_path, key):
    enc = encrypt(random_image(16, 16), key, CipherConfig(2, 2))
    png, _ = save_encrypted(enc, tmp_path / "a.enc.png")
    (tmp_path / "a.enc.json").unlink()

    with pytest.raises(DataFormatError):
        load_encrypted(png)


def test_load_encrypted_rejects_tampered_sidecar(tmp_path, key):
    enc = encrypt(random_image(16, 16), key, CipherConfig(2, 2))
    png, meta = save_encrypted(enc, tmp_path / "a.enc.png")
    document = json.loads(meta.read_text())
    document["key_id"] = "not-hex"
    meta.write_text(json.dumps(document))

    with pytest.raises(DataFormatError):
        load_encrypted(png)


def test_encrypted_image_grid_must_match_config(key):
    img = random_image(16, 16)

    with pytest.raises(DimensionMismatchError):
        EncryptedImage(img, CipherConfig(2, 2), PatchGrid(4, 4, 4, 4), key.key_id)


def test_cipher_names():
    assert cipher_stem("dir/photo.enc.png") == "photo"
    png, meta = cipher_paths("in/photo.png", "out")
    assert (str(png), str(meta)) == ("out/photo.enc.png", "out/photo.enc.json")


def test_cipher_targets_keep_unique_stems_flat():
    targets = cipher_targets(["cats/a.png", "dogs/b.png"], "out")

    assert [str(t) for t in targets] == ["out/a.enc.png", "out/b.enc.png"]


def test_cipher_targets_separate_duplicate_stems_by_class():
    targets = cipher_targets(["cats/img1.png", "dogs/img1.png", "dogs/img2.png"], "out")

    assert [str(t) for t in targets] == ["out/cats/img1.enc.png", "out/dogs/img1.enc.png", "out/img2.enc.png"]


def test_cipher_targets_fall_back_to_index_prefix():
    targets = cipher_targets(["cats/img1.png", "cats/img1.jpg"], "out")

    assert [str(t) for t in targets] == ["out/cats/00000-img1.enc.png", "out/cats/00001-img1.enc.png"]
    assert len(set(cipher_targets(["a/x.png", "a/x.jpg", "b/x.png"]))) == 3


def test_permutation_stages_keep_each_channel_histogram(key):
    img = random_image(32, 32, seed=17)
    config = CipherConfig.from_flags(4, 4, {**dict.fromkeys(STAGE_FLAGS, False), "pixel_scramble": True, "block_shuffle": True})

    out = encrypt(img, key, config).tensor.data

    assert not np.array_equal(out, img.data)
    for c in range(3):
        assert np.array_equal(np.sort(out[:, :, c], axis=None), np.sort(img.data[:, :, c], axis=None))
    assert sorted(map(tuple, out.reshape(-1, 3))) == sorted(map(tuple, img.data.reshape(-1, 3)))


def test_channel_shuffle_keeps_each_pixel_values(key):
    img = random_image(16, 16, seed=18)
    config = CipherConfig.from_flags(2, 2, {**dict.fromkeys(STAGE_FLAGS, False), "channel_shuffle": True})

    out = encrypt(img, key, config).tensor.data

    assert not np.array_equal(out, img.data)
    assert np.array_equal(np.sort(out, axis=2), np.sort(img.data, axis=2))


def test_negpos_mirrors_the_histogram_of_flipped_pixels(key):
    img = random_image(16, 16, seed=19)
    config = CipherConfig.from_flags(2, 2, {**dict.fromkeys(STAGE_FLAGS, False), "negpos": True})

    out = encrypt(img, key, config).tensor.data.reshape(-1, 3)
    flipped = negpos_bits(key, 256).astype(bool)
    plain = img.data.reshape(-1, 3)

    assert 0 < flipped.sum() < 256
    assert np.array_equal(out[~flipped], plain[~flipped])
    assert np.array_equal(out[flipped], 255 - plain[flipped])
    assert np.array_equal(
        np.bincount(out[flipped].ravel(), minlength=256),
        np.bincount(plain[flipped].ravel(), minlength=256)[::-1],
    )
