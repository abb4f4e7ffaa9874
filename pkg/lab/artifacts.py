"""All-or-nothing output files.

Bodies are staged next to their destination and renamed into place only when
the command that produced them finishes; a failed command leaves no files
behind. CSV files start with a ``#`` header line, JSON files carry a
``header`` object.
"""

from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path
from typing import Dict, List, Optional

from core.errors import ConfigError
from core.utils.fingerprint import short
from lab import __version__

logger = logging.getLogger(__name__)

TMP_SUFFIX = ".tmp.csl"


def make_header(config_hash: str, mesh_fingerprint: str, seed: int, stamp: bool = False) -> Dict[str, object]:
    header: Dict[str, object] = {
        "tool": "csl",
        "version": __version__,
        "config": short(config_hash),
        "mesh": short(mesh_fingerprint) if mesh_fingerprint else "",
        "seed": seed,
    }
    if stamp:
        header["stamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return header


def csv_header_line(header: Dict[str, object]) -> str:
    parts = [f"# csl {header['version']}", f"config={header['config']}",
             f"mesh={header['mesh']}", f"seed={header['seed']}"]
    if "stamp" in header:
        parts.append(f"stamp={header['stamp']}")
    return " ".join(parts) + "\n"


class ArtifactWriter:
    """Context manager staging every file of one command.

    ``with ArtifactWriter(out, header) as w: w.write_json(...)``; files appear
    in *out* on a clean exit and are discarded if the block raises.
    """

    def __init__(self, out_dir: Path, header: Dict[str, object]) -> None:
        self.out_dir = Path(out_dir)
        self.header = header
        self._staged: List[tuple] = []

    def __enter__(self) -> "ArtifactWriter":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def _stage(self, name: str, text: str) -> Path:
        target = self.out_dir / name
        tmp = target.with_name(target.name + TMP_SUFFIX)
        with tmp.open("w", encoding="utf-8", newline="\n") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        self._staged.append((tmp, target))
        return target

    def write_text(self, name: str, text: str) -> Path:
        return self._stage(name, text)

    def write_annotated(self, name: str, body: str, after_first_line: bool = False) -> Path:
        """Text file carrying the ``#`` header.

        The header goes first unless *after_first_line* keeps a format's
        magic line on top.
        """
        header = csv_header_line(self.header)
        if after_first_line:
            first, _, rest = body.partition("\n")
            return self._stage(name, first + "\n" + header + rest)
        return self._stage(name, header + body)

    write_csv = write_annotated

    def write_json(self, name: str, payload: dict) -> Path:
        document = {"header": self.header, "result": payload}
        return self._stage(name, json.dumps(document, indent=2, sort_keys=True) + "\n")

    def commit(self) -> List[Path]:
        written = []
        for tmp, target in self._staged:
            os.replace(tmp, target)
            written.append(target)
        self._staged.clear()
        for path in written:
            logger.info("Wrote %s", path)
        return written

    def discard(self) -> None:
        for tmp, _ in self._staged:
            try:
                tmp.unlink()
            except FileNotFoundError:
                pass
        if self._staged:
            logger.warning("Discarded %d incomplete artifacts", len(self._staged))
        self._staged.clear()

    def __exit__(self, exc_type, exc, tb) -> Optional[bool]:
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return None


def read_json_artifact(path: Path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"result file not found: {path}") from exc
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path} is not a JSON result file: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path} does not hold a JSON object")
    return document
