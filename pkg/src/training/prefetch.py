import logging
import queue
import threading
from typing import Callable, Generic, Iterator, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

_DONE = object()


class BatchPrefetcher(Generic[T]):
    """
    Builds items 0..count-1 on a background thread, at most `depth` ahead of
    the consumer. Items are yielded strictly in index order; producer errors
    are re-raised in the consuming thread.
    """

    def __init__(self, produce: Callable[[int], T], count: int, depth: int = 4):
        self._produce = produce
        self._count = count
        self._queue: "queue.Queue" = queue.Queue(maxsize=max(1, depth))
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _run(self):
        try:
            for index in range(self._count):
                if self._stop.is_set():
                    return
                item = self._produce(index)
                while not self._stop.is_set():
                    try:
                        self._queue.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
        except Exception as e:
            logger.error(f"Batch producer failed: {e}", exc_info=True)
            self._queue.put(e)
            return
        self._queue.put(_DONE)

    def __enter__(self) -> "BatchPrefetcher[T]":
        self._thread = threading.Thread(target=self._run, name="batch-prefetch", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self._stop.set()
        while True:
            try:
                self._queue.get_nowait()
            except queue.Empty:
                break
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __iter__(self) -> Iterator[T]:
        if self._thread is None:
            raise RuntimeError("BatchPrefetcher must be entered before iteration")
        while True:
            item = self._queue.get()
            if item is _DONE:
                return
            if isinstance(item, Exception):
                raise item
            yield item
