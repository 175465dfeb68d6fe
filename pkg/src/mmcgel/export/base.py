"""Base writer interface, writer manager and atomic file helpers."""

import logging
import os
import tempfile
from abc import ABC, abstractmethod
from pathlib import Path

from mmcgel.models import StepRecord
from mmcgel.stepper import Snapshot

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: Path | str, data: bytes) -> Path:
    """Write data to a temporary sibling and rename it over path.

    Raises:
        OSError: With the target path in the message
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise OSError(e.errno, f"cannot write {path}: {e.strerror}") from e
    return path


def atomic_write_text(path: Path | str, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


class WriterError(OSError):
    """One or more writers failed; the message names the first one."""

    def __init__(self, failures: list[tuple[str, str]]):
        name, message = failures[0]
        more = f" (+{len(failures) - 1} more)" if len(failures) > 1 else ""
        super().__init__(f"writer {name} failed: {message}{more}")
        self.failures = list(failures)


def format_float(value: float | None) -> str:
    """Shortest decimal that parses back to the same float; empty for None."""
    return "" if value is None else repr(float(value))


class BaseWriter(ABC):
    """Abstract base class for run output writers."""

    def __init__(self, name: str):
        """Initialize writer.

        Args:
            name: Writer name for logging
        """
        self.name = name
        self._enabled = True

    @property
    def enabled(self) -> bool:
        """Check if writer is enabled."""
        return self._enabled

    @enabled.setter
    def enabled(self, value: bool) -> None:
        self._enabled = value

    def on_record(self, record: StepRecord) -> None:
        """Receive a step record. Default does nothing."""
        pass

    def on_snapshot(self, snapshot: Snapshot) -> None:
        """Receive a snapshot. Default does nothing."""
        pass

    @abstractmethod
    def close(self) -> list[Path]:
        """Flush everything still buffered.

        Returns:
            Paths written by this writer over its lifetime
        """
        pass


class WriterManager:
    """Fans records and snapshots out to several writers in order."""

    def __init__(self):
        self._writers: list[BaseWriter] = []
        self._written: list[Path] = []
        self.failures: list[tuple[str, str]] = []

    def add_writer(self, writer: BaseWriter) -> None:
        """Add a writer.

        Args:
            writer: Writer to add
        """
        self._writers.append(writer)
        logger.debug(f"Added writer: {writer.name}")

    def remove_writer(self, writer: BaseWriter) -> None:
        """Remove a writer.

        Args:
            writer: Writer to remove
        """
        if writer in self._writers:
            self._writers.remove(writer)
            logger.debug(f"Removed writer: {writer.name}")

    def _dispatch(self, method: str, item: object) -> None:
        for writer in self._writers:
            if not writer.enabled:
                continue
            try:
                getattr(writer, method)(item)
            except Exception as e:
                logger.error(f"Writer error ({writer.name}): {e}")
                self.failures.append((writer.name, str(e)))
                writer.enabled = False

    def on_record(self, record: StepRecord) -> None:
        self._dispatch("on_record", record)

    def on_snapshot(self, snapshot: Snapshot) -> None:
        self._dispatch("on_snapshot", snapshot)

    def close(self) -> list[Path]:
        """Close every writer, including ones disabled after an error.

        Returns:
            All paths written
        """
        for writer in self._writers:
            try:
                self._written.extend(writer.close())
            except Exception as e:
                logger.error(f"Failed to close writer {writer.name}: {e}")
                self.failures.append((writer.name, str(e)))
        self._writers.clear()
        return list(self._written)

    @property
    def written(self) -> list[Path]:
        return list(self._written)

    def __enter__(self) -> "WriterManager":
        return self

    def __exit__(self, *args) -> None:
        self.close()
