"""
Command Line Interface for blockvit.

This module provides the CLI commands for:
- Key generation, encryption and decryption
- Reconstruction attacks, security metrics and key sensitivity
- Multi-client dataset building and directory ingestion
- Vision Transformer training, evaluation and the learnability experiment
- The Original | Encrypted | Post-Attack demo and file validation
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import typer

from app import __version__
from app.attacks import AttackKind, run_attack
from app.codec import (
    PRESETS,
    SIDECAR_SCHEMA,
    STAGE_FLAGS,
    CipherConfig,
    cipher_targets,
    cipher_stem,
    decrypt,
    encrypt,
    load_encrypted,
    save_encrypted,
)
from app.error_handler import BlockViTError, InvalidArgumentError
from app.error_handler import handle_pipeline_error as report_error
from app.imagecore import center_crop, compose_side_by_side, parse_grid, read_image, write_image
from app.keyschedule import MasterKey, load_key, save_key
from app.metrics import compare_images, key_sensitivity, metrics_row, write_metrics_csv
from app.pipeline import (
    build_clients,
    encrypt_shard,
    ingest_directory,
    load_manifest,
    save_manifest,
    shard_from_manifest,
)
from app.samples import DEMO_SEED, demo_key, natural_scene
from app.train import TrainConfig, evaluate, learnability_experiment, load_manifest_batch, train as train_model
from app.utils import (
    ensure_directory,
    load_json,
    resolve_run_config,
    run_batch,
    save_json,
    setup_logging,
    validate_data_schema,
    write_run_config,
)
from app.vit import CHECKPOINT_SCHEMA, ViTConfig, load_checkpoint, save_checkpoint
from config import LOG_FILE, LOG_LEVEL

# Configure logging
setup_logging(LOG_LEVEL, LOG_FILE)
logger = logging.getLogger("BlockViT.CLI")

# Create Typer app
app = typer.Typer(
    name="blockvit",
    help="blockvit - keyed block-pixel image encryption, attacks, metrics and an encrypted-domain ViT",
    add_completion=False,
)


def handle_pipeline_error(error: Exception, stage: str, context: Optional[Dict[str, Any]] = None) -> NoReturn:
    """Report an error with user guidance and exit with its code (2 for invalid arguments, else 1)."""
    try:
        report_error(error, stage, context)
    except BlockViTError as wrapped:
        raise typer.Exit(wrapped.exit_code)
    raise typer.Exit(1)


def validate_file_exists(file_path: Path, file_type: str = "file") -> Path:
    """Validate that a file exists and return it."""
    if not file_path.exists():
        typer.echo(f"Error: {file_type} not found: {file_path}", err=True)
        raise typer.Exit(2)
    return file_path


def _verbosity(verbose: bool) -> None:
    if verbose:
        setup_logging(logging.DEBUG, LOG_FILE)


def _cipher_config(settings: Dict[str, Any], stage_flags: Dict[str, Optional[bool]], config_file: Optional[Path]) -> CipherConfig:
    """Preset and grid first, then stage flags (flag > config file > preset)."""
    rows, cols = parse_grid(settings["grid"])
    base = CipherConfig.preset(settings["preset"], rows, cols)
    stages = resolve_run_config(stage_flags, config_file, defaults=base.stage_flags())
    return CipherConfig.from_flags(base.grid_rows, base.grid_cols, stages)


def _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle) -> Dict[str, Optional[bool]]:
    return dict(zip(STAGE_FLAGS, (pixel_scramble, block_shuffle, negpos, channel_shuffle)))


def _record(settings: Dict[str, Any], cipher: Optional[CipherConfig], out_dir: Path, command: str) -> None:
    record = dict(settings)
    if cipher is not None:
        record.update(cipher.stage_flags())
        record["grid"] = f"{cipher.grid_rows}x{cipher.grid_cols}"
    write_run_config(record, out_dir, command)


def _summarize(done: int, failures: List[str], what: str) -> None:
    typer.echo(f"✅ {done} {what}")
    if failures:
        typer.echo(f"❌ {len(failures)} file(s) failed:", err=True)
        for failure in failures:
            typer.echo(f"  - {failure}", err=True)
        raise typer.Exit(1)


@app.command()
def keygen(
    out_path: Path = typer.Argument(..., help="Key file path, or a directory to receive <key_id>.key"),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing key file"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Generate a 32-byte master key from the operating system entropy source."""
    _verbosity(verbose)
    try:
        key = MasterKey.generate()
        path = save_key(key, out_path, force=force)
        typer.echo(f"🔑 key_id: {key.key_id}")
        typer.echo(f"💾 Key saved to: {path}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "key generation", {"key_file": str(out_path)})


@app.command("encrypt")
def encrypt_cmd(
    images: List[Path] = typer.Argument(..., help="Plaintext images (8-bit PNG, PPM or PGM)"),
    key: Path = typer.Option(..., "--key", "-k", help="Key file"),
    out_dir: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (default: next to each image)"),
    grid: Optional[str] = typer.Option(None, "--grid", "-g", help="Block grid ROWSxCOLS (default 8x8)"),
    preset: Optional[str] = typer.Option(None, "--preset", help=f"Stage preset: {', '.join(PRESETS)}"),
    pixel_scramble: Optional[bool] = typer.Option(None, "--pixel-scramble/--no-pixel-scramble"),
    block_shuffle: Optional[bool] = typer.Option(None, "--block-shuffle/--no-block-shuffle"),
    negpos: Optional[bool] = typer.Option(None, "--negpos/--no-negpos"),
    channel_shuffle: Optional[bool] = typer.Option(None, "--channel-shuffle/--no-channel-shuffle"),
    crop: Optional[bool] = typer.Option(None, "--center-crop/--no-center-crop", help="Crop to a grid-divisible size"),
    record_digest: Optional[bool] = typer.Option(None, "--record-digest/--no-record-digest"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Parallel workers"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Encrypt images into <stem>.enc.png plus <stem>.enc.json."""
    _verbosity(verbose)
    failures: List[str] = []
    try:
        flags = {"grid": grid, "preset": preset, "center_crop": crop, "record_digest": record_digest, "jobs": jobs}
        settings = resolve_run_config(flags, config_file)
        cipher = _cipher_config(settings, _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle), config_file)
        master = load_key(key)
        typer.echo(f"🔐 Encrypting {len(images)} image(s) with key {master.key_id} ({cipher.describe()})")

        def encrypt_one(path: Path):
            img = read_image(path)
            if settings["center_crop"]:
                img = center_crop(img, cipher.grid_rows, cipher.grid_cols)
            return encrypt(img, master, cipher, record_digest=settings["record_digest"])

        results = run_batch(encrypt_one, images, jobs=settings["jobs"], desc="Encrypting", unit="image")
        done = 0
        for path, result, target in zip(images, results, cipher_targets(images, out_dir)):
            if isinstance(result, Exception):
                failures.append(f"{path}: {result}")
                continue
            try:
                written, _ = save_encrypted(result, target)
            except OSError as e:
                failures.append(f"{path}: write failed: {e}")
                continue
            for notice in result.notices:
                typer.echo(f"ℹ️  {path.name}: {notice}")
            logger.debug(f"Wrote {written}")
            done += 1

        _record(settings, cipher, out_dir or images[0].parent, "encrypt")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "encryption", {"key_file": str(key)})
    _summarize(done, failures, "image(s) encrypted")


@app.command("decrypt")
def decrypt_cmd(
    ciphers: List[Path] = typer.Argument(..., help="Ciphertext .enc.png files (sidecars alongside)"),
    key: Path = typer.Option(..., "--key", "-k", help="Key file"),
    out_dir: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (default: next to each file)"),
    force: bool = typer.Option(False, "--force", help="Decrypt even if the key fingerprint does not match"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Parallel workers"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Decrypt ciphertexts into <stem>.dec.png."""
    _verbosity(verbose)
    failures: List[str] = []
    try:
        master = load_key(key)
        workers = resolve_run_config({"jobs": jobs})["jobs"]
        results = run_batch(lambda p: decrypt(load_encrypted(p), master, force=force), ciphers, jobs=workers, desc="Decrypting")
        done = 0
        for path, result in zip(ciphers, results):
            if isinstance(result, Exception):
                failures.append(f"{path}: {result}")
                continue
            folder = out_dir or path.parent
            try:
                write_image(result, Path(folder) / f"{cipher_stem(path)}.dec.png")
            except OSError as e:
                failures.append(f"{path}: write failed: {e}")
                continue
            done += 1
        write_run_config({"key_id": master.key_id, "force": force, "jobs": workers}, out_dir or ciphers[0].parent, "decrypt")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "decryption", {"key_file": str(key)})
    _summarize(done, failures, "image(s) decrypted")


@app.command()
def attack(
    cipher: Path = typer.Argument(..., help="Ciphertext .enc.png (sidecar alongside)"),
    kind: Optional[str] = typer.Option(None, "--kind", help="leading-bit, minimum-difference or combined"),
    truth: Optional[Path] = typer.Option(None, "--truth", "-t", help="Plaintext for scoring the reconstruction"),
    mode: Optional[str] = typer.Option(None, "--mode", help="Leading-bit mode: block or pixel"),
    anchor: Optional[int] = typer.Option(None, "--anchor", help="Seed block for slot (0,0); default tries all"),
    out_dir: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (default: next to the file)"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Run a ciphertext-only reconstruction attack and write its image and JSON report."""
    _verbosity(verbose)
    try:
        validate_file_exists(cipher, "Ciphertext")
        settings = resolve_run_config({"kind": kind, "mode": mode}, config_file)
        attack_kind = AttackKind.parse(settings["kind"])
        enc = load_encrypted(cipher)
        ground_truth = read_image(validate_file_exists(truth, "Ground truth")) if truth else None

        report = run_attack(enc, attack_kind, ground_truth, mode=settings["mode"], anchor=anchor)
        folder = ensure_directory(out_dir or cipher.parent)
        stem = f"{cipher_stem(cipher)}.attack-{attack_kind.value}"
        write_image(report.reconstructed, folder / f"{stem}.png")
        save_json(report.to_dict(), folder / f"{stem}.json")
        _record({**settings, "anchor": anchor, "truth": truth}, None, folder, "attack")

        typer.echo(f"🗡️  {attack_kind.value} attack finished in {report.wall_time:.3f}s")
        if report.npcr_vs_plain is not None:
            typer.echo(f"📊 NPCR {report.npcr_vs_plain:.4f}  UACI {report.uaci_vs_plain:.4f}  SSIM {report.ssim_vs_plain}")
        typer.echo(f"💾 Report saved to: {folder / (stem + '.json')}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "attack", {"file_path": str(cipher)})


@app.command()
def metrics(
    images: List[Path] = typer.Argument(..., help="Image pairs: A1 B1 [A2 B2 ...]"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="CSV output path"),
    samples: Optional[int] = typer.Option(None, "--samples", help="Adjacent pairs for correlation"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for pair sampling"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Compute NPCR, UACI, correlations, entropy and SSIM for image pairs."""
    _verbosity(verbose)
    failures: List[str] = []
    try:
        if len(images) % 2:
            raise InvalidArgumentError(f"Images must come in pairs, got {len(images)} path(s)")
        settings = resolve_run_config({"samples": samples, "seed": seed}, config_file)
        rows = []
        for path_a, path_b in zip(images[::2], images[1::2]):
            try:
                rows.append(
                    metrics_row(path_a, path_b, read_image(path_a), read_image(path_b), settings["samples"], settings["seed"])
                )
            except (BlockViTError, OSError) as e:
                failures.append(f"{path_a} / {path_b}: {e}")
        for row in rows:
            typer.echo(
                f"{Path(row['path_a']).name} vs {Path(row['path_b']).name}: npcr={row['npcr']:.4f} "
                f"uaci={row['uaci']:.4f} corr_h={row['corr_h']:.4f} corr_v={row['corr_v']:.4f} ssim={row['ssim']}"
            )
        if out:
            write_metrics_csv(rows, out)
            _record(settings, None, out.parent, "metrics")
            typer.echo(f"💾 Metrics saved to: {out}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "metrics")
    _summarize(len(rows), failures, "pair(s) measured")


@app.command()
def sensitivity(
    image: Path = typer.Argument(..., help="Plaintext image"),
    key: Path = typer.Option(..., "--key", "-k", help="Key file"),
    flip_bits: int = typer.Option(1, "--flip-bits", help="Key bits to flip (0 = identical-key control)"),
    grid: Optional[str] = typer.Option(None, "--grid", "-g", help="Block grid ROWSxCOLS"),
    preset: Optional[str] = typer.Option(None, "--preset", help=f"Stage preset: {', '.join(PRESETS)}"),
    pixel_scramble: Optional[bool] = typer.Option(None, "--pixel-scramble/--no-pixel-scramble"),
    block_shuffle: Optional[bool] = typer.Option(None, "--block-shuffle/--no-block-shuffle"),
    negpos: Optional[bool] = typer.Option(None, "--negpos/--no-negpos"),
    channel_shuffle: Optional[bool] = typer.Option(None, "--channel-shuffle/--no-channel-shuffle"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed choosing the flipped bits"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="JSON output path"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Compare ciphertexts of one image under a key and the key with flipped bits."""
    _verbosity(verbose)
    try:
        settings = resolve_run_config({"grid": grid, "preset": preset, "seed": seed}, config_file)
        cipher = _cipher_config(settings, _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle), config_file)
        result = key_sensitivity(read_image(image), load_key(key), cipher, flip_bits=flip_bits, seed=settings["seed"])
        typer.echo(f"📊 NPCR {result.npcr:.4f}  UACI {result.uaci:.4f}  SSIM {result.ssim}")
        if out:
            save_json({"flip_bits": flip_bits, **result.to_dict()}, out)
            _record({**settings, "flip_bits": flip_bits}, cipher, out.parent, "sensitivity")
            typer.echo(f"💾 Report saved to: {out}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "key sensitivity", {"file_path": str(image)})


@app.command("build-dataset")
def build_dataset(
    out_dir: Path = typer.Argument(..., help="Root directory for clients/ and server/"),
    clients: Optional[int] = typer.Option(None, "--clients", help="Number of simulated clients"),
    classes: Optional[int] = typer.Option(None, "--classes", help="Number of classes (2-4)"),
    num_per_class: Optional[int] = typer.Option(None, "--num-per-class", help="Images per class per client"),
    size: Optional[int] = typer.Option(None, "--size", help="Image side in pixels"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Dataset, key and split seed"),
    val_fraction: Optional[float] = typer.Option(None, "--val-fraction", help="Validation share"),
    shared_key: Optional[bool] = typer.Option(None, "--shared-key/--distinct-keys", help="One key for every client"),
    random_keys: bool = typer.Option(False, "--random-keys", help="Fresh OS keys instead of seed-derived ones"),
    grid: Optional[str] = typer.Option(None, "--grid", "-g", help="Block grid ROWSxCOLS"),
    preset: Optional[str] = typer.Option(None, "--preset", help=f"Stage preset: {', '.join(PRESETS)}"),
    pixel_scramble: Optional[bool] = typer.Option(None, "--pixel-scramble/--no-pixel-scramble"),
    block_shuffle: Optional[bool] = typer.Option(None, "--block-shuffle/--no-block-shuffle"),
    negpos: Optional[bool] = typer.Option(None, "--negpos/--no-negpos"),
    channel_shuffle: Optional[bool] = typer.Option(None, "--channel-shuffle/--no-channel-shuffle"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Parallel workers"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Simulate clients that encrypt synthetic shards with their own keys, then split on the server."""
    _verbosity(verbose)
    try:
        flags = {
            "clients": clients,
            "classes": classes,
            "num_per_class": num_per_class,
            "size": size,
            "seed": seed,
            "val_fraction": val_fraction,
            "shared_key": shared_key,
            "grid": grid,
            "preset": preset,
            "jobs": jobs,
        }
        settings = resolve_run_config(flags, config_file)
        cipher = _cipher_config(settings, _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle), config_file)
        typer.echo(f"🏗️  Building {settings['clients']} client shard(s) under {out_dir} ({cipher.describe()})")
        result = build_clients(
            out_dir,
            cipher,
            clients=settings["clients"],
            num_per_class=settings["num_per_class"],
            classes=settings["classes"],
            size=settings["size"],
            seed=settings["seed"],
            val_fraction=settings["val_fraction"],
            shared_key=settings["shared_key"],
            random_keys=random_keys,
            jobs=settings["jobs"],
        )
        _record({**settings, "random_keys": random_keys}, cipher, out_dir, "build-dataset")
        for client_id, manifest in result.client_manifests.items():
            typer.echo(f"  • {client_id}: {len(manifest)} image(s), key {result.key_ids[client_id]}")
        typer.echo(f"✅ Server split: {len(result.train)} train / {len(result.val)} val")
        failures = [f["path"] for m in result.client_manifests.values() for f in m.failures]
        if failures:
            typer.echo(f"❌ {len(failures)} image(s) failed to encrypt", err=True)
            raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "dataset build", {"file_path": str(out_dir)})


@app.command()
def ingest(
    root: Path = typer.Argument(..., help="Directory with one subdirectory per class"),
    out: Path = typer.Option(..., "--out", "-o", help="Manifest JSON to write"),
    key: Optional[Path] = typer.Option(None, "--key", "-k", help="Encrypt the images as one client shard"),
    enc_dir: Optional[Path] = typer.Option(None, "--enc-dir", help="Ciphertext directory (with --key)"),
    client_id: str = typer.Option("local", "--client-id", help="Client id recorded in the manifest"),
    grid: Optional[str] = typer.Option(None, "--grid", "-g", help="Block grid ROWSxCOLS"),
    preset: Optional[str] = typer.Option(None, "--preset", help=f"Stage preset: {', '.join(PRESETS)}"),
    pixel_scramble: Optional[bool] = typer.Option(None, "--pixel-scramble/--no-pixel-scramble"),
    block_shuffle: Optional[bool] = typer.Option(None, "--block-shuffle/--no-block-shuffle"),
    negpos: Optional[bool] = typer.Option(None, "--negpos/--no-negpos"),
    channel_shuffle: Optional[bool] = typer.Option(None, "--channel-shuffle/--no-channel-shuffle"),
    crop: Optional[bool] = typer.Option(None, "--center-crop/--no-center-crop", help="Crop to a grid-divisible size"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Parallel workers"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Turn a class-per-subdirectory image folder into a manifest, optionally encrypting it."""
    _verbosity(verbose)
    try:
        manifest = ingest_directory(root, client_id=client_id)
        if key is None:
            save_manifest(manifest, out)
            typer.echo(f"✅ {len(manifest)} image(s) in {len(manifest.class_names)} class(es) -> {out}")
            return

        settings = resolve_run_config({"grid": grid, "preset": preset, "center_crop": crop, "jobs": jobs}, config_file)
        cipher = _cipher_config(settings, _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle), config_file)
        master = load_key(key)
        shard = shard_from_manifest(manifest, client_id, master.key_id)
        target = enc_dir or out.parent / "enc"
        encrypted = encrypt_shard(
            shard, master, cipher, target, jobs=settings["jobs"], crop=settings["center_crop"], manifest_path=out
        )
        _record(settings, cipher, target, "ingest")
        typer.echo(f"🔐 {len(encrypted)} image(s) encrypted into {target}; manifest {out}")
        if encrypted.failures:
            for failure in encrypted.failures:
                typer.echo(f"  - {failure['path']}: {failure['error']}", err=True)
            raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "ingestion", {"file_path": str(root)})


def _train_config(settings: Dict[str, Any]) -> TrainConfig:
    return TrainConfig(
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        optimizer=settings["optimizer"],
        seed=settings["seed"],
    )


def _vit_config(settings: Dict[str, Any], shape, num_classes: int) -> ViTConfig:
    return ViTConfig(
        image_h=shape[0],
        image_w=shape[1],
        channels=shape[2],
        patch_size=settings["patch_size"],
        embed_dim=settings["embed_dim"],
        num_heads=settings["num_heads"],
        num_layers=settings["num_layers"],
        mlp_dim=settings["mlp_dim"],
        num_classes=num_classes,
        use_positional_embedding=settings["positional_embedding"],
        seed=settings["seed"],
    )


@app.command()
def train(
    train_manifest: Path = typer.Argument(..., help="Training manifest (server/train.json)"),
    val_manifest: Optional[Path] = typer.Option(None, "--val", help="Validation manifest (server/val.json)"),
    out_dir: Path = typer.Option(..., "--out", "-o", help="Directory for the checkpoint and reports"),
    patch_size: Optional[int] = typer.Option(None, "--patch-size"),
    embed_dim: Optional[int] = typer.Option(None, "--embed-dim"),
    num_heads: Optional[int] = typer.Option(None, "--num-heads"),
    num_layers: Optional[int] = typer.Option(None, "--num-layers"),
    mlp_dim: Optional[int] = typer.Option(None, "--mlp-dim"),
    positional_embedding: Optional[bool] = typer.Option(None, "--positional-embedding/--no-positional-embedding"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size"),
    learning_rate: Optional[float] = typer.Option(None, "--learning-rate", "--lr"),
    optimizer: Optional[str] = typer.Option(None, "--optimizer", help="adam or sgd"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Train the Vision Transformer on a manifest of (encrypted) images."""
    _verbosity(verbose)
    try:
        flags = {
            "patch_size": patch_size,
            "embed_dim": embed_dim,
            "num_heads": num_heads,
            "num_layers": num_layers,
            "mlp_dim": mlp_dim,
            "positional_embedding": positional_embedding,
            "epochs": epochs,
            "batch_size": batch_size,
            "learning_rate": learning_rate,
            "optimizer": optimizer,
            "seed": seed,
        }
        settings = resolve_run_config(flags, config_file)
        manifest = load_manifest(validate_file_exists(train_manifest, "Training manifest"))
        if not len(manifest):
            raise InvalidArgumentError(f"Training manifest {train_manifest} has no entries")
        first = read_image(manifest.resolve(manifest.entries[0].path))
        vit_config = _vit_config(settings, first.shape, len(manifest.class_names))
        train_data = load_manifest_batch(manifest, vit_config)
        val_data = load_manifest_batch(load_manifest(val_manifest), vit_config) if val_manifest else None

        typer.echo(f"🧠 Training on {len(train_data)} image(s), {len(manifest.class_names)} class(es)")
        report = train_model(train_data, val_data, vit_config, _train_config(settings), show_progress=True)
        out_dir = ensure_directory(out_dir)
        save_checkpoint(report.params, vit_config, out_dir / "model.ckpt")
        report.write_csv(out_dir / "train-report.csv")
        save_json(report.to_dict(), out_dir / "train-report.json")
        _record({**settings, "train_manifest": train_manifest, "val_manifest": val_manifest}, None, out_dir, "train")

        last = report.epochs[-1] if report.epochs else None
        if last:
            typer.echo(f"📊 Final loss {last.train_loss:.4f}, train acc {last.train_acc:.3f}, val acc {last.val_acc}")
        typer.echo(f"💾 Checkpoint saved to: {out_dir / 'model.ckpt'}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "training", {"file_path": str(train_manifest)})


@app.command("eval")
def evaluate_cmd(
    manifest_path: Path = typer.Argument(..., help="Manifest to evaluate on"),
    checkpoint: Path = typer.Option(..., "--checkpoint", "-m", help="model.ckpt written by train"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="JSON output path"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Report argmax accuracy of a checkpoint on a manifest."""
    _verbosity(verbose)
    try:
        params, vit_config = load_checkpoint(validate_file_exists(checkpoint, "Checkpoint"))
        data = load_manifest_batch(load_manifest(validate_file_exists(manifest_path, "Manifest")), vit_config)
        accuracy = evaluate(data, params, vit_config)
        typer.echo(f"🎯 Accuracy: {accuracy:.4f} on {len(data)} image(s)")
        if out:
            save_json({"manifest": str(manifest_path), "checkpoint": str(checkpoint), "accuracy": accuracy}, out)
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "evaluation", {"file_path": str(manifest_path)})


@app.command()
def experiment(
    out_dir: Path = typer.Argument(..., help="Directory for the experiment report"),
    num_per_class: Optional[int] = typer.Option(None, "--num-per-class"),
    size: Optional[int] = typer.Option(None, "--size"),
    classes: Optional[int] = typer.Option(None, "--classes", help="Number of classes (2-4)"),
    clients: Optional[int] = typer.Option(None, "--clients", help="Clients in the distinct-keys arm"),
    val_fraction: Optional[float] = typer.Option(None, "--val-fraction"),
    patch_size: Optional[int] = typer.Option(None, "--patch-size"),
    embed_dim: Optional[int] = typer.Option(None, "--embed-dim"),
    num_heads: Optional[int] = typer.Option(None, "--num-heads"),
    num_layers: Optional[int] = typer.Option(None, "--num-layers"),
    mlp_dim: Optional[int] = typer.Option(None, "--mlp-dim"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size"),
    learning_rate: Optional[float] = typer.Option(None, "--learning-rate", "--lr"),
    optimizer: Optional[str] = typer.Option(None, "--optimizer", help="adam or sgd"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Train one ViT on plaintext, shared-key and distinct-keys copies of a synthetic dataset."""
    _verbosity(verbose)
    try:
        flags = {
            "num_per_class": num_per_class,
            "size": size,
            "classes": classes,
            "clients": clients,
            "val_fraction": val_fraction,
            "patch_size": patch_size,
            "embed_dim": embed_dim,
            "num_heads": num_heads,
            "num_layers": num_layers,
            "mlp_dim": mlp_dim,
            "epochs": epochs,
            "batch_size": batch_size,
            "learning_rate": learning_rate,
            "optimizer": optimizer,
            "seed": seed,
        }
        settings = resolve_run_config(flags, config_file, keys=[*flags, "positional_embedding"])
        side = settings["size"]
        vit_config = _vit_config(settings, (side, side, 3), settings["classes"])
        report = learnability_experiment(
            vit_config,
            _train_config(settings),
            num_per_class=settings["num_per_class"],
            val_fraction=settings["val_fraction"],
            clients=settings["clients"],
            seed=settings["seed"],
        )
        out_dir = ensure_directory(out_dir)
        for arm, arm_report in report.arms.items():
            arm_report.write_csv(out_dir / f"{arm}-report.csv")
        summary = {"clients": report.clients, "arms": report.summary(), "shared_key_gap": report.gap("shared_key")}
        save_json(summary, out_dir / "learnability.json")
        _record(settings, None, out_dir, "experiment")
        for arm, values in summary["arms"].items():
            typer.echo(f"  • {arm}: val acc {values['final_val_acc']:.3f} ({values['train_time_s']:.1f}s training)")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "learnability experiment")


@app.command()
def demo(
    out_dir: Path = typer.Argument(Path("demo"), help="Output directory"),
    sample: Optional[Path] = typer.Option(None, "--sample", "-s", help="Plaintext image (default: bundled scene)"),
    key: Optional[Path] = typer.Option(None, "--key", "-k", help="Key file (default: fixed demo key)"),
    grid: Optional[str] = typer.Option(None, "--grid", "-g", help="Block grid ROWSxCOLS"),
    preset: Optional[str] = typer.Option(None, "--preset", help=f"Stage preset: {', '.join(PRESETS)}"),
    mode: Optional[str] = typer.Option(None, "--mode", help="Leading-bit mode: block or pixel"),
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML or key=value run configuration"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
) -> None:
    """Compose Original | Encrypted | Post-Attack into one PNG and summarize the metrics."""
    _verbosity(verbose)
    try:
        settings = resolve_run_config({"grid": grid, "preset": preset, "mode": mode}, config_file)
        cipher = _cipher_config(settings, _stage_flags(pixel_scramble, block_shuffle, negpos, channel_shuffle), config_file)
        plain = read_image(sample) if sample else natural_scene(256, 256, seed=DEMO_SEED)
        master = load_key(key) if key else demo_key()

        enc = encrypt(plain, master, cipher)
        reports = {kind: run_attack(enc, kind, plain, mode=settings["mode"]) for kind in AttackKind}
        attacked = reports[AttackKind.COMBINED].reconstructed
        out_dir = ensure_directory(out_dir)
        triptych = compose_side_by_side([plain, enc.tensor, attacked], gutter=4)
        write_image(triptych, out_dir / "demo.png")
        save_encrypted(enc, out_dir / "demo.enc.png")

        encrypted_metrics = compare_images(plain, enc.tensor)
        summary = {
            "key_id": master.key_id,
            "sample": str(sample) if sample else "bundled-scene",
            "encrypted": {"npcr": encrypted_metrics.npcr, "uaci": encrypted_metrics.uaci, "ssim": encrypted_metrics.ssim},
            "attacks": {kind.value: report.to_dict() for kind, report in reports.items()},
        }
        save_json(summary, out_dir / "demo-summary.json")
        _record(settings, cipher, out_dir, "demo")
        typer.echo(f"🖼️  Triptych {triptych.width}x{triptych.height} saved to: {out_dir / 'demo.png'}")
        typer.echo(f"📊 Encrypted NPCR {encrypted_metrics.npcr:.4f}, SSIM {encrypted_metrics.ssim}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "demo")


@app.command()
def validate(file_path: Path = typer.Argument(..., help="Sidecar (.enc.json), manifest or checkpoint header")) -> None:
    """Schema-check a sidecar, a dataset manifest or a checkpoint header."""
    try:
        validate_file_exists(file_path, "File")
        document = load_json(file_path)
        if file_path.name.endswith(".enc.json"):
            validate_data_schema(document, SIDECAR_SCHEMA, str(file_path))
            typer.echo(f"✅ Valid sidecar: grid {document['grid_rows']}x{document['grid_cols']}, key {document['key_id']}")
        elif file_path.name.endswith(".ckpt.json"):
            validate_data_schema(document, CHECKPOINT_SCHEMA, str(file_path))
            typer.echo(f"✅ Valid checkpoint header: {len(document['parameters'])} tensors")
        else:
            manifest = load_manifest(file_path)
            typer.echo(f"✅ Valid manifest: {len(manifest)} entries, classes {manifest.class_names}")
    except typer.Exit:
        raise
    except Exception as e:
        handle_pipeline_error(e, "validation", {"file_path": str(file_path)})


@app.command()
def info() -> None:
    """Display blockvit information and environment settings."""
    typer.echo("🔧 blockvit")
    typer.echo("=" * 40)
    typer.echo(f"Version: {__version__}")
    typer.echo(f"Python: {sys.version.split()[0]}")

    typer.echo("\n🌍 Environment Variables:")
    for var in ["BLOCKVIT_LOG_LEVEL", "BLOCKVIT_LOG_FILE", "BLOCKVIT_JOBS"]:
        value = os.getenv(var)
        typer.echo(f"  {var}: {value if value else '(default)'}")

    typer.echo("\n🔐 Presets:")
    for name in PRESETS:
        typer.echo(f"  - {name}: {CipherConfig.preset(name).describe()}")
    typer.echo(f"\n🗡️  Attacks: {', '.join(kind.value for kind in AttackKind)}")


if __name__ == "__main__":
    app()
