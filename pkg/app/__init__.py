"""
blockvit - keyed block-pixel image encryption and an encrypted-domain Vision Transformer.

This package provides:
- A deterministic ChaCha20 key schedule for permutations, bits and channel orders
- Block-pixel encryption with pixel scramble, block shuffle, negative-positive and channel shuffle stages
- Ciphertext-only reconstruction attacks (leading-bit, minimum-difference, combined)
- Security metrics (NPCR, UACI, adjacent correlation, entropy, SSIM, key sensitivity)
- Multi-client dataset building with per-client keys and a stratified server split
- A NumPy Vision Transformer with analytic gradients, SGD/Adam training and checkpoints
"""

import logging

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "1.0.0"

from .attacks import AttackKind, AttackReport, run_attack  # noqa: E402
from .codec import CipherConfig, EncryptedImage, decrypt, encrypt  # noqa: E402
from .error_handler import BlockViTError, ErrorHandler, handle_pipeline_error  # noqa: E402
from .imagecore import ImageTensor, PatchGrid, read_image, write_image  # noqa: E402
from .keyschedule import MasterKey, Permutation, load_key, save_key  # noqa: E402
from .metrics import SecurityMetrics, compare_images, key_sensitivity  # noqa: E402

__all__ = [
    "__version__",
    "AttackKind",
    "AttackReport",
    "BlockViTError",
    "CipherConfig",
    "EncryptedImage",
    "ErrorHandler",
    "ImageTensor",
    "MasterKey",
    "PatchGrid",
    "Permutation",
    "SecurityMetrics",
    "compare_images",
    "decrypt",
    "encrypt",
    "handle_pipeline_error",
    "key_sensitivity",
    "load_key",
    "read_image",
    "run_attack",
    "save_key",
    "write_image",
]
