"""Lock files and atomic writes shared by the profile store and sync."""

from __future__ import annotations

import os
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

STALE_AFTER = 10.0


class LockHeld(Exception):
    """Another process holds a fresh lock on the resource."""


def lock_path_for(path: Path) -> Path:
    return path.with_name(path.name + ".lock")


def _try_create(lock: Path) -> bool:
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
    except FileExistsError:
        return False
    with os.fdopen(fd, "w") as fh:
        fh.write(f"{os.getpid()}\n")
    return True


@contextmanager
def exclusive_lock(path: Path, stale_after: float = STALE_AFTER) -> Iterator[Path]:
    """Hold a sibling ``<name>.lock`` file for the duration of the block.

    Never waits: a fresh lock raises :class:`LockHeld` immediately. A lock
    older than *stale_after* seconds is assumed abandoned and broken.
    """
    lock = lock_path_for(Path(path))
    if not _try_create(lock):
        try:
            age = time.time() - lock.stat().st_mtime
        except FileNotFoundError:
            age = stale_after + 1  # released between our attempt and stat
        if age <= stale_after:
            raise LockHeld(str(lock))
        lock.unlink(missing_ok=True)
        if not _try_create(lock):
            raise LockHeld(str(lock))
    try:
        yield lock
    finally:
        lock.unlink(missing_ok=True)


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write *data* to *path* via a sibling temp file and ``os.replace``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
