"""Thread-safe in-memory store for learned class identifiers.

Handles are opaque tokens, valid until explicitly deleted."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StoredIdentifier:
    handle: str
    class_id: int
    embedding: np.ndarray
    loss_trace: tuple[float, ...]


class IdentifierStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._items: dict[str, StoredIdentifier] = {}
        self._counter = 0

    def put(self, class_id: int, embedding: np.ndarray,
            loss_trace=()) -> StoredIdentifier:
        with self._lock:
            self._counter += 1
            handle = f"id-{class_id}-{self._counter:06d}"
            item = StoredIdentifier(handle=handle, class_id=int(class_id),
                                    embedding=np.asarray(embedding, dtype=np.float64),
                                    loss_trace=tuple(loss_trace))
            self._items[handle] = item
            return item

    def get(self, handle: str) -> StoredIdentifier | None:
        with self._lock:
            return self._items.get(handle)

    def delete(self, handle: str) -> bool:
        with self._lock:
            return self._items.pop(handle, None) is not None
