"""Append-only JSONL event log for CLI runs."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .constants import OBS_LOG_FILENAME

UTC = timezone.utc


class EventLog:
    def __init__(self, log_dir: Path | None) -> None:
        self.log_path = None if log_dir is None else log_dir / OBS_LOG_FILENAME

    async def log_event(
        self, event: str, level: str = "info", payload: dict[str, Any] | None = None
    ) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "event": event,
            "level": level,
            "payload": payload or {},
            "ts": datetime.now(UTC).isoformat(),
        }
        with self.log_path.open("a", encoding="utf-8") as fp:
            fp.write(json.dumps(entry, default=str) + "\n")

    def read(self) -> list[dict[str, Any]]:
        if self.log_path is None or not self.log_path.exists():
            return []
        lines = self.log_path.read_text(encoding="utf-8").splitlines()
        return [json.loads(line) for line in lines if line.strip()]
