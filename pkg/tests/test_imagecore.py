import numpy as np
import pytest
from PIL import Image

from app.error_handler import DataFormatError, DimensionMismatchError, InvalidArgumentError
from app.imagecore import (
    ImageTensor,
    PatchGrid,
    center_crop,
    compose_side_by_side,
    parse_grid,
    read_image,
    reassemble,
    split_into_patches,
    write_image,
)
from tests.sample_images import gradient_image, random_image


@pytest.mark.parametrize("text,expected", [("8x8", (8, 8)), ("2X3", (2, 3)), (" 4 x 1 ", (4, 1))])
def test_parse_grid(text, expected):
    assert parse_grid(text) == expected


@pytest.mark.parametrize("text", ["8", "0x4", "ax2", ""])
def test_parse_grid_rejects_garbage(text):
    with pytest.raises(InvalidArgumentError):
        parse_grid(text)


def test_image_tensor_promotes_2d_and_is_read_only():
    img = ImageTensor(np.zeros((4, 5), dtype=np.uint8))

    assert img.shape == (4, 5, 1)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1


def test_image_tensor_rejects_out_of_range_samples():
    with pytest.raises(InvalidArgumentError):
        ImageTensor(np.full((2, 2, 3), 256, dtype=np.int32))
    with pytest.raises(InvalidArgumentError):
        ImageTensor(np.zeros((2, 2, 2), dtype=np.uint8))


def test_split_then_reassemble_is_identity():
    img = random_image(24, 32, seed=1)
    grid = PatchGrid.for_image(img, 3, 4)

    patches = split_into_patches(img, grid)

    assert len(patches) == 12
    assert patches[5].shape == (8, 8, 3)
    assert np.array_equal(patches[5].data, img.data[8:16, 8:16])
    assert reassemble(patches, grid) == img


def test_patch_grid_rejects_indivisible_image():
    with pytest.raises(DimensionMismatchError):
        PatchGrid.for_image(random_image(10, 16), 4, 4)


def test_reassemble_rejects_wrong_patch_count():
    img = random_image(8, 8)
    grid = PatchGrid.for_image(img, 2, 2)

    with pytest.raises(DimensionMismatchError):
        reassemble(split_into_patches(img, grid)[:3], grid)


def test_center_crop_to_divisible_size():
    img = random_image(10, 13, seed=2)

    cropped = center_crop(img, 4, 4)

    assert cropped.shape == (8, 12, 3)
    assert np.array_equal(cropped.data, img.data[1:9, 0:12])


def test_center_crop_too_small():
    with pytest.raises(DimensionMismatchError):
        center_crop(random_image(3, 3), 4, 4)


def test_png_round_trip(tmp_path):
    img = random_image(9, 7, seed=3)

    path = write_image(img, tmp_path / "img.png")

    assert read_image(path) == img


def test_pgm_round_trip(tmp_path):
    img = gradient_image(12, 12)

    path = write_image(img, tmp_path / "img.pgm")

    assert read_image(path) == img


def test_read_rgba_png_drops_alpha(tmp_path):
    rgba = np.zeros((4, 4, 4), dtype=np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 255
    Image.fromarray(rgba, mode="RGBA").save(tmp_path / "alpha.png")

    img = read_image(tmp_path / "alpha.png")

    assert img.shape == (4, 4, 3)
    assert int(img.data[0, 0, 0]) == 200


def test_read_rejects_16_bit(tmp_path):
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16) + 1000).save(tmp_path / "deep.png")

    with pytest.raises(DataFormatError):
        read_image(tmp_path / "deep.png")


def test_read_rejects_non_image(tmp_path):
    (tmp_path / "note.png").write_text("not an image")

    with pytest.raises(DataFormatError):
        read_image(tmp_path / "note.png")


def test_compose_side_by_side_layout():
    a, b = random_image(8, 8, seed=4), gradient_image(8, 5)

    panel = compose_side_by_side([a, b, a], gutter=4)

    assert panel.shape == (8, 8 + 4 + 5 + 4 + 8, 3)
    assert np.all(panel.data[:, 8:12] == 255)
    assert np.array_equal(panel.data[:, :8], a.data)


def test_compose_side_by_side_rejects_mixed_heights():
    with pytest.raises(DimensionMismatchError):
        compose_side_by_side([random_image(8, 8), random_image(9, 8)])


def test_digest_changes_with_content():
    img = random_image(4, 4, seed=5)
    data = img.data.copy()
    data[0, 0, 0] ^= 1

    assert img.digest() != ImageTensor(data).digest()
    assert len(img.digest()) == 64
