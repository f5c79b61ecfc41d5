"""
Output directory setup and serialized artifact writes.
"""
import logging
import threading
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from saddlecert.config import OUTPUT_DIR
from saddlecert.exceptions import IoError

logger = logging.getLogger(__name__)

# Writers may be called from worker threads; files are written one at a time.
_write_lock = threading.Lock()


def init_output_dir(path: Optional[str] = None) -> Path:
    """Create the output directory (``OUTPUT_DIR`` unless given)."""
    out = Path(path or OUTPUT_DIR)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_frame(frame: pd.DataFrame, path: Path, columns: Sequence[str]) -> Path:
    """CSV with a fixed column order and 12 significant digits."""
    with _write_lock:
        try:
            frame.to_csv(
                path,
                columns=list(columns),
                index=False,
                float_format="%.12g",
                lineterminator="\n",
            )
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_text(text: str, path: Path) -> Path:
    with _write_lock:
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    logger.info(f"Wrote {path}")
    return path
