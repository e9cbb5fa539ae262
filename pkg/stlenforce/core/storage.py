"""Filesystem helpers for stlenforce artifacts."""

from __future__ import annotations

import logging
import os
from pathlib import Path
import shutil
import tempfile

from stlenforce.core.errors import StlEnforceError


_LOGGER = logging.getLogger(__name__)


class StorageError(StlEnforceError):
    pass


class MissingInputError(StorageError):
    pass


def ensure_output_dir(path: Path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(
            f"Unable to create output directory {path}: {exc}",
            user_message=f"Cannot create output directory {path}.",
        ) from exc
    return path


def read_text(path: Path) -> str:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"Missing input file: {path}", user_message=f"File not found: {path}")
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise StorageError(f"Unable to read {path}: {exc}", user_message=f"Cannot read {path}.") from exc


def write_text(path: Path, text: str) -> Path:
    """Write via a temp file and atomic replace so readers never see partial output."""
    path = Path(path)
    ensure_output_dir(path.parent)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except OSError as exc:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise StorageError(f"Unable to write {path}: {exc}", user_message=f"Cannot write {path}.") from exc
    _LOGGER.debug("Wrote %s (%d bytes)", path, len(text))
    return path


def copy_file(src: Path, dest: Path) -> Path:
    ensure_output_dir(Path(dest).parent)
    try:
        shutil.copyfile(src, dest)
    except OSError as exc:
        raise StorageError(f"Unable to copy {src} to {dest}: {exc}", user_message=f"Cannot write {dest}.") from exc
    return Path(dest)
