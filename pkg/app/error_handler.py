"""
Error handling and user guidance for blockvit.

This module provides the exception hierarchy used across the package and
turns arbitrary failures into messages with actionable solutions.
"""

import logging
import traceback
from enum import Enum
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class ErrorCategory(Enum):
    """Categories of errors for better organization."""

    CONFIGURATION = "configuration"
    KEY = "key"
    DIMENSION = "dimension"
    FILE_SYSTEM = "file_system"
    DATA_FORMAT = "data_format"
    TRAINING = "training"
    INTEGRITY = "integrity"
    VALIDATION = "validation"


# Categories that mean the caller passed something unusable; the CLI exits with 2 for these.
ARGUMENT_CATEGORIES = {ErrorCategory.CONFIGURATION, ErrorCategory.VALIDATION}


class BlockViTError(Exception):
    """Base exception class for blockvit with enhanced error information."""

    default_category = ErrorCategory.VALIDATION

    def __init__(
        self,
        message: str,
        category: Optional[ErrorCategory] = None,
        solutions: Optional[List[str]] = None,
        original_error: Optional[Exception] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.category = category or self.default_category
        self.solutions = solutions or []
        self.original_error = original_error
        self.context = context or {}
        super().__init__(self.message)

    @property
    def exit_code(self) -> int:
        return 2 if self.category in ARGUMENT_CATEGORIES else 1

    def get_user_friendly_message(self) -> str:
        """Generate a user-friendly error message with solutions."""
        msg = f"\n❌ {self.category.value.replace('_', ' ').title()} Error: {self.message}\n"

        if self.context:
            msg += "\n📋 Context:\n"
            for key, value in self.context.items():
                msg += f"  • {key}: {value}\n"

        if self.solutions:
            msg += "\n💡 Suggested Solutions:\n"
            for i, solution in enumerate(self.solutions, 1):
                msg += f"  {i}. {solution}\n"

        if self.original_error:
            msg += f"\n🔍 Technical Details: {str(self.original_error)}\n"

        return msg


class InvalidArgumentError(BlockViTError, ValueError):
    """An argument is outside its valid domain (n = 0, empty dataset, bad grid string...)."""

    default_category = ErrorCategory.VALIDATION


class DimensionMismatchError(BlockViTError, ValueError):
    """Shapes disagree: grid does not divide the image, permutation length differs, etc."""

    default_category = ErrorCategory.DIMENSION


class WrongKeyError(BlockViTError):
    """The key fingerprint does not match the one recorded with the ciphertext."""

    default_category = ErrorCategory.KEY


class KeyFileError(BlockViTError):
    """A key file is missing, malformed or would be overwritten."""

    default_category = ErrorCategory.KEY


class DataFormatError(BlockViTError):
    """An image, sidecar, manifest or checkpoint cannot be parsed."""

    default_category = ErrorCategory.DATA_FORMAT


class NonFiniteLossError(BlockViTError, ArithmeticError):
    """Training produced a NaN or infinite loss."""

    default_category = ErrorCategory.TRAINING


class ConfigurationError(BlockViTError):
    """Custom exception for configuration-related errors."""

    default_category = ErrorCategory.CONFIGURATION


class ErrorHandler:
    """Centralized error handling with user-friendly messages and solutions."""

    @staticmethod
    def handle_key_error(error: Exception, key_file: Optional[str] = None) -> BlockViTError:
        """Handle key-file and key-mismatch errors."""
        error_msg = str(error).lower()

        if "does not match" in error_msg or "fingerprint" in error_msg:
            return WrongKeyError(
                message="Ciphertext was produced with a different key",
                solutions=[
                    "Use the key whose key_id is recorded in the .enc.json sidecar",
                    "Key files are named <key_id>.key - compare the names",
                    "Pass --force only for attack or key-sensitivity experiments",
                ],
                original_error=error,
                context={"key_file": key_file},
            )

        return KeyFileError(
            message="Key file could not be used",
            solutions=[
                "A key file holds exactly 64 lowercase hex characters and a newline",
                "Generate a fresh key with: blockvit keygen <path>",
                "Use --force to overwrite an existing key file deliberately",
            ],
            original_error=error,
            context={"key_file": key_file},
        )

    @staticmethod
    def handle_dimension_error(error: Exception, file_path: Optional[str] = None) -> BlockViTError:
        """Handle grid/shape mismatches."""
        return DimensionMismatchError(
            message="Image dimensions do not fit the requested grid or model",
            solutions=[
                "Choose a grid whose rows and columns divide the image height and width",
                "Use --center-crop to crop images to the nearest divisible size",
                "For training, make sure every image matches the ViT image size",
            ],
            original_error=error,
            context={"file_path": file_path},
        )

    @staticmethod
    def handle_file_error(error: Exception, file_path: Optional[str] = None) -> BlockViTError:
        """Handle file system errors."""
        error_msg = str(error).lower()

        if "no such file" in error_msg or "not found" in error_msg:
            return BlockViTError(
                message=f"File not found: {file_path}",
                category=ErrorCategory.FILE_SYSTEM,
                solutions=[
                    "Check if the file path is correct",
                    "Ensure the file exists in the specified location",
                    "Ciphertexts need their .enc.json sidecar next to the .enc.png",
                ],
                original_error=error,
                context={"file_path": file_path},
            )

        elif "permission denied" in error_msg:
            return BlockViTError(
                message="Permission denied accessing file",
                category=ErrorCategory.FILE_SYSTEM,
                solutions=[
                    "Check file permissions - ensure read/write access",
                    "Ensure the output directory is writable",
                ],
                original_error=error,
                context={"file_path": file_path},
            )

        return BlockViTError(
            message="File system error occurred",
            category=ErrorCategory.FILE_SYSTEM,
            solutions=["Check file path and permissions", "Ensure sufficient disk space"],
            original_error=error,
            context={"file_path": file_path},
        )

    @staticmethod
    def handle_data_format_error(error: Exception, file_path: Optional[str] = None) -> BlockViTError:
        """Handle image, sidecar and manifest parsing errors."""
        error_msg = str(error).lower()

        if "json" in error_msg or "schema" in error_msg:
            return DataFormatError(
                message="Invalid sidecar, manifest or checkpoint header",
                solutions=[
                    "Check the file with: blockvit validate <file>",
                    "Regenerate the file instead of editing it by hand",
                ],
                original_error=error,
                context={"file_path": file_path},
            )

        return DataFormatError(
            message="Unsupported or corrupted image data",
            solutions=[
                "Only 8-bit PNG (RGB or grayscale) and PPM/PGM are supported",
                "Convert 16-bit or DICOM images to 8-bit PNG first",
            ],
            original_error=error,
            context={"file_path": file_path},
        )

    @staticmethod
    def handle_training_error(error: Exception) -> BlockViTError:
        """Handle optimisation failures."""
        return NonFiniteLossError(
            message="Training diverged",
            solutions=[
                "Lower the learning rate (default 1e-3 with Adam)",
                "Check that inputs are scaled to [0, 1] and labels are valid",
                "Try --optimizer adam if SGD with momentum diverges",
            ],
            original_error=error,
        )

    @staticmethod
    def wrap_error(error: Exception, context: Optional[Dict[str, Any]] = None) -> BlockViTError:
        """
        Wrap any exception into a BlockViTError with appropriate handling.

        Args:
            error: Original exception
            context: Additional context information

        Returns:
            BlockViTError: Wrapped error with user-friendly message
        """
        context = context or {}
        if isinstance(error, BlockViTError):
            if not error.solutions:
                error.solutions = ["Run with --verbose for the full traceback"]
            error.context = {**context, **error.context}
            return error

        wrapped = ErrorHandler._classify(error, context)
        wrapped.context = {**context, **{k: v for k, v in wrapped.context.items() if v is not None}}
        return wrapped

    @staticmethod
    def _classify(error: Exception, context: Dict[str, Any]) -> BlockViTError:
        error_msg = str(error).lower()
        file_path = context.get("file_path")

        if isinstance(error, (FileNotFoundError, PermissionError, IsADirectoryError)):
            return ErrorHandler.handle_file_error(error, file_path)

        elif any(keyword in error_msg for keyword in ["key file", "key_id", "fingerprint"]):
            return ErrorHandler.handle_key_error(error, context.get("key_file"))

        elif any(keyword in error_msg for keyword in ["divisible", "shape", "dimension"]):
            return ErrorHandler.handle_dimension_error(error, file_path)

        elif any(keyword in error_msg for keyword in ["json", "schema", "image file", "decode", "cannot identify"]):
            return ErrorHandler.handle_data_format_error(error, file_path)

        elif any(keyword in error_msg for keyword in ["nan", "non-finite", "overflow"]):
            return ErrorHandler.handle_training_error(error)

        elif any(keyword in error_msg for keyword in ["config", "yaml", "missing required", "placeholder"]):
            return ConfigurationError(
                message="Configuration error occurred",
                solutions=[
                    "Config files are YAML mappings or flat key=value text",
                    "Keys mirror the command-line flag names (dashes become underscores)",
                ],
                original_error=error,
                context=context,
            )

        return BlockViTError(
            message=f"An unexpected error occurred: {str(error)}",
            category=ErrorCategory.VALIDATION if isinstance(error, ValueError) else ErrorCategory.INTEGRITY,
            solutions=[
                "Check the error details below for more information",
                "Try running with --verbose flag for more details",
            ],
            original_error=error,
            context=context,
        )


def log_error_with_context(
    error: Exception, context: Optional[Dict[str, Any]] = None, logger_instance: Optional[logging.Logger] = None
) -> None:
    """
    Log error with full context and traceback.

    Args:
        error: Exception to log
        context: Additional context information
        logger_instance: Logger instance to use
    """
    log = logger_instance or logger
    context = context or {}

    log.error(f"Error occurred: {str(error)}")
    if context:
        log.error(f"Context: {context}")
    log.debug(f"Traceback: {traceback.format_exc()}")


def handle_pipeline_error(error: Exception, stage: str, context: Optional[Dict[str, Any]] = None) -> None:
    """
    Handle errors raised by a workflow stage with user-friendly messages.

    Args:
        error: Exception that occurred
        stage: Stage where the error occurred (encryption, training, ...)
        context: Additional context information

    Raises:
        BlockViTError: always, wrapping the original error
    """
    context = dict(context or {})
    context["stage"] = stage

    wrapped = ErrorHandler.wrap_error(error, context)
    log_error_with_context(error, context)
    print(wrapped.get_user_friendly_message())

    raise wrapped
