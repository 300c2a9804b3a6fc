import numpy as np
import pytest

from app.attacks import (
    AttackKind,
    edge_costs,
    leading_bit_attack,
    minimum_difference_attack,
    run_attack,
    solve_block_arrangement,
)
from app.codec import CipherConfig, EncryptedImage, encrypt
from app.error_handler import InvalidArgumentError
from app.imagecore import ImageTensor, PatchGrid, from_blocks, to_blocks
from app.keyschedule import Permutation
from app.metrics import npcr
from tests.sample_images import channel_ramp_image, dark_image, fixed_key, random_image

NEGPOS_ONLY = dict(pixel_scramble=False, block_shuffle=False, negpos=True, channel_shuffle=False)
BLOCK_SHUFFLE_ONLY = dict(pixel_scramble=False, block_shuffle=True, negpos=False, channel_shuffle=False)


@pytest.mark.parametrize("text,kind", [("leading-bit", AttackKind.LEADING_BIT), ("minimum_difference", AttackKind.MINIMUM_DIFFERENCE), ("COMBINED", AttackKind.COMBINED)])
def test_attack_kind_parse(text, kind):
    assert AttackKind.parse(text) is kind


def test_attack_kind_parse_unknown():
    with pytest.raises(InvalidArgumentError):
        AttackKind.parse("brute-force")


def test_leading_bit_pixel_mode_recovers_negpos_on_dark_image():
    plain = dark_image(32, 32, seed=1)
    enc = encrypt(plain, fixed_key(), CipherConfig(4, 4).with_stages(**NEGPOS_ONLY))

    recovered = leading_bit_attack(enc, mode="pixel")

    assert 1.0 - npcr(plain, recovered) >= 0.99
    assert recovered == plain


def test_leading_bit_block_mode_flips_bright_blocks():
    plain = dark_image(16, 16, seed=2)
    grid = PatchGrid.for_image(plain, 2, 2)
    blocks = to_blocks(plain.data, grid).copy()
    blocks[[0, 3]] = 255 - blocks[[0, 3]]
    enc = EncryptedImage(ImageTensor(from_blocks(blocks, grid)), CipherConfig(2, 2), grid, fixed_key().key_id)

    assert leading_bit_attack(enc, mode="block") == plain


def test_leading_bit_rejects_unknown_mode():
    enc = encrypt(dark_image(16, 16), fixed_key(), CipherConfig(2, 2))

    with pytest.raises(InvalidArgumentError):
        leading_bit_attack(enc, mode="column")


def test_edge_costs_small_example():
    blocks = np.zeros((2, 2, 2, 1), dtype=np.uint8)
    blocks[0, :, 1, 0] = [10, 20]
    blocks[1, :, 0, 0] = [13, 16]

    lr, tb = edge_costs(blocks)

    assert lr[0, 1] == 3 + 4
    assert lr.shape == tb.shape == (2, 2)


@pytest.mark.parametrize("size,grid", [(16, 2), (24, 3)])
def test_minimum_difference_recovers_block_arrangement(size, grid):
    plain = channel_ramp_image(size)
    enc = encrypt(plain, fixed_key(), CipherConfig(grid, grid).with_stages(**BLOCK_SHUFFLE_ONLY))

    assert minimum_difference_attack(enc) == plain


def test_solve_block_arrangement_with_anchor():
    plain = channel_ramp_image(24)
    grid = PatchGrid.for_image(plain, 3, 3)
    blocks = to_blocks(plain.data, grid)
    shuffle = Permutation(np.array([4, 8, 0, 2, 6, 1, 3, 7, 5]))

    arrangement, cost = solve_block_arrangement(shuffle.apply(blocks), grid, anchor=2)

    assert shuffle.apply(np.arange(9))[arrangement.mapping].tolist() == list(range(9))
    assert cost == 12 * 8 * 10


def test_solve_block_arrangement_rejects_bad_anchor():
    blocks = to_blocks(channel_ramp_image(16).data, PatchGrid(2, 2, 8, 8))

    with pytest.raises(InvalidArgumentError):
        solve_block_arrangement(blocks, PatchGrid(2, 2, 8, 8), anchor=4)


def test_run_attack_scores_against_ground_truth():
    plain = random_image(32, 32, seed=3)
    enc = encrypt(plain, fixed_key(), CipherConfig(4, 4))

    report = run_attack(enc, AttackKind.COMBINED, plain)

    assert report.kind is AttackKind.COMBINED
    assert report.reconstructed.shape == plain.shape
    assert 0.0 <= report.npcr_vs_plain <= 1.0
    assert report.ssim_vs_plain is not None
    assert report.to_dict()["kind"] == "combined"


def test_run_attack_without_ground_truth_has_no_scores():
    enc = encrypt(random_image(16, 16), fixed_key(), CipherConfig(2, 2))

    report = run_attack(enc, AttackKind.LEADING_BIT)

    assert report.npcr_vs_plain is None and report.ssim_vs_plain is None


def test_run_attack_small_image_has_no_ssim():
    plain = random_image(4, 4, seed=4)
    enc = encrypt(plain, fixed_key(), CipherConfig(2, 2))

    report = run_attack(enc, AttackKind.MINIMUM_DIFFERENCE, plain)

    assert report.ssim_vs_plain is None
    assert report.npcr_vs_plain is not None


def test_run_attack_rejects_mismatched_ground_truth():
    enc = encrypt(random_image(16, 16), fixed_key(), CipherConfig(2, 2))

    with pytest.raises(InvalidArgumentError):
        run_attack(enc, AttackKind.LEADING_BIT, random_image(8, 8))


def test_minimum_difference_only_moves_whole_blocks():
    enc = encrypt(random_image(32, 32, seed=31), fixed_key(), CipherConfig(4, 4))

    recovered = minimum_difference_attack(enc)

    before = sorted(block.tobytes() for block in to_blocks(enc.tensor.data, enc.grid))
    after = sorted(block.tobytes() for block in to_blocks(recovered.data, enc.grid))
    assert after == before


@pytest.mark.parametrize("kind", list(AttackKind))
def test_all_zero_ciphertext_is_a_fixed_point(kind):
    blank = ImageTensor(np.zeros((16, 16, 3), dtype=np.uint8))
    enc = EncryptedImage(blank, CipherConfig(4, 4), PatchGrid(4, 4, 4, 4), fixed_key().key_id)

    assert run_attack(enc, kind).reconstructed == blank
    assert run_attack(enc, kind, mode="pixel").reconstructed == blank


@pytest.mark.parametrize("kind", list(AttackKind))
def test_attacks_are_deterministic(kind):
    enc = encrypt(channel_ramp_image(16), fixed_key(), CipherConfig(4, 4))

    first = run_attack(enc, kind).reconstructed
    second = run_attack(enc, kind).reconstructed

    assert first == second
