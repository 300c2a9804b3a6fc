import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Environment variables
LOG_LEVEL = os.getenv("BLOCKVIT_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("BLOCKVIT_LOG_FILE")
JOBS = int(os.getenv("BLOCKVIT_JOBS", "1"))

# Defaults for every run-config key. Flags override a config file, which overrides these.
DEFAULTS = {
    # cipher
    "grid": "8x8",
    "preset": "block-pixel",
    "pixel_scramble": True,
    "block_shuffle": True,
    "negpos": True,
    "channel_shuffle": True,
    "center_crop": False,
    "record_digest": True,
    # attacks and metrics
    "kind": "combined",
    "mode": "block",
    "samples": 5000,
    "seed": 0,
    # dataset
    "clients": 3,
    "classes": 2,
    "num_per_class": 250,
    "size": 16,
    "val_fraction": 0.2,
    "shared_key": False,
    # model
    "patch_size": 4,
    "embed_dim": 32,
    "num_heads": 4,
    "num_layers": 2,
    "mlp_dim": 64,
    "positional_embedding": False,
    # training
    "epochs": 30,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "optimizer": "adam",
    # execution
    "jobs": JOBS,
}
