import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.constants import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV


def resolve_output_dir(cli_out: Optional[str], config_out: Optional[str]) -> Path:
    """--out wins, then the config file, then the environment, then ./runs."""
    for candidate in (cli_out, config_out, os.getenv(OUTPUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT_DIR)


def ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write_text(path: Path, text: str) -> None:
    """Write through a temp file in the same directory, then rename."""
    path = Path(path)
    ensure_dir(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.remove(tmp_name)
        except OSError:
            pass
        raise


def csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def derive_seed(master: int, *parts: float) -> int:
    """Stable 32-bit seed from a master seed and a tuple of rates or indices."""
    # rates are quantized so 0.1 from a config file and 0.1 from arange agree
    entropy = [int(master)] + [int(round(float(p) * 1_000_000)) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def format_rate(p: float) -> str:
    return f"{int(round(p * 100))}%"
