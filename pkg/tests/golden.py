"""
Golden ciphertext digest for the fixed test vector.

Prints the SHA-256 of the ciphertext of ``vector_image()`` under the fixed key and the
default configuration; ``--freeze`` records it in tests/data/golden_vector.json.

    python -m tests.golden [--freeze]
"""

from pathlib import Path

import typer

from app.codec import CipherConfig, encrypt
from app.utils import load_json, save_json
from tests.sample_images import FIXED_KEY_HEX, fixed_key, vector_image

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_vector.json"


def golden_digest() -> str:
    return encrypt(vector_image(), fixed_key(), CipherConfig()).tensor.digest()


def frozen_digest():
    """The committed digest (None only before the first freeze)."""
    return load_json(GOLDEN_PATH).get("digest")


def main(freeze: bool = typer.Option(False, "--freeze", help="Write the digest to the golden file")) -> None:
    digest = golden_digest()
    typer.echo(digest)
    if freeze:
        record = load_json(GOLDEN_PATH)
        if record.get("digest") not in (None, digest):
            typer.echo(f"Refusing to replace frozen digest {record['digest']}", err=True)
            raise typer.Exit(1)
        save_json({**record, "key_hex": FIXED_KEY_HEX, "digest": digest}, GOLDEN_PATH)
        typer.echo(f"💾 Frozen in {GOLDEN_PATH}")


if __name__ == "__main__":
    typer.run(main)
