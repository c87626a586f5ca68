"""Record/replay of protocol responses.

A cassette is a JSON-lines file of {"key", "endpoint", "response"} records,
keyed by a canonical hash of the request body. Recording appends on first
sight; replay serves the stored response verbatim (byte-identical JSON) and
refuses requests it has never seen, so tests depending on a live model can
be replayed anywhere.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def request_key(endpoint: str, body: dict) -> str:
    canon = json.dumps({"endpoint": endpoint, "body": body}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class CassetteMiss(KeyError):
    pass


class Cassette:
    def __init__(self, path: str | Path, mode: str):
        if mode not in ("record", "replay"):
            raise ValueError(f"cassette mode must be record or replay, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._store: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._store[rec["key"]] = rec["response"]
        elif mode == "replay":
            raise FileNotFoundError(f"cassette {self.path} does not exist")

    def lookup(self, endpoint: str, body: dict) -> str | None:
        return self._store.get(request_key(endpoint, body))

    def store(self, endpoint: str, body: dict, response_json: str) -> None:
        key = request_key(endpoint, body)
        if key in self._store:
            return
        self._store[key] = response_json
        with self.path.open("a") as fh:
            fh.write(json.dumps({"key": key, "endpoint": endpoint, "response": response_json}) + "\n")

    def replay(self, endpoint: str, body: dict) -> str:
        found = self.lookup(endpoint, body)
        if found is None:
            raise CassetteMiss(f"no recorded response for {endpoint} request")
        return found
