"""8-bit portable graymap heatmaps of concentration snapshots."""

import logging
from pathlib import Path

import cv2
import numpy as np

from mmcgel.export.base import BaseWriter, atomic_write_bytes
from mmcgel.export.csv_writer import snapshot_stem
from mmcgel.grid import CellField
from mmcgel.stepper import Snapshot

logger = logging.getLogger(__name__)


def to_gray(phi: CellField, phi_max: float) -> np.ndarray:
    """Map [0, phi_max] linearly onto 0..255.

    The image has n rows and m columns with y increasing upwards, so
    image[0, 0] is the cell at the top-left corner of the domain.
    """
    scaled = np.rint(phi.values / phi_max * 255.0)
    gray = np.clip(scaled, 0, 255).astype(np.uint8)
    return np.ascontiguousarray(np.flipud(gray.T))


def write_graymap(phi: CellField, phi_max: float, path: Path | str) -> Path:
    """Encode phi as binary PGM and write it atomically.

    Raises:
        OSError: If encoding fails or the file cannot be written
    """
    ok, buf = cv2.imencode(".pgm", to_gray(phi, phi_max))
    if not ok:
        raise OSError(f"cannot encode graymap for {path}")
    return atomic_write_bytes(path, buf.tobytes())


class GraymapWriter(BaseWriter):
    """Writes <dir>/phi_t<t>.pgm for every snapshot."""

    def __init__(self, directory: Path | str, phi_max: float):
        super().__init__("graymap")
        self.directory = Path(directory)
        self.phi_max = phi_max
        self._written: list[Path] = []

    def on_snapshot(self, snapshot: Snapshot) -> None:
        path = self.directory / f"{snapshot_stem(snapshot.scheduled)}.pgm"
        self._written.append(write_graymap(snapshot.phi, self.phi_max, path))
        logger.debug(f"Graymap written: {path}")

    def close(self) -> list[Path]:
        return list(self._written)
