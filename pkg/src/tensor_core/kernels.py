import logging
from contextlib import contextmanager
from typing import Iterator, Optional

from threadpoolctl import threadpool_limits

logger = logging.getLogger(__name__)


@contextmanager
def deterministic_kernels() -> Iterator[None]:
    """Single-threaded BLAS, so matmul reductions always run in the same order."""
    with threadpool_limits(limits=1, user_api="blas"):
        yield


@contextmanager
def benchmark_kernels(threads: Optional[int] = None) -> Iterator[None]:
    """
    Lets BLAS use `threads` threads (library default when None or 0). Results
    may differ from deterministic mode by floating-point reassociation.
    """
    if not threads:
        yield
        return
    logger.info(f"Benchmark kernels limited to {threads} BLAS threads")
    with threadpool_limits(limits=threads, user_api="blas"):
        yield


@contextmanager
def kernel_mode(deterministic: bool, threads: Optional[int] = None) -> Iterator[None]:
    if deterministic:
        with deterministic_kernels():
            yield
    else:
        with benchmark_kernels(threads):
            yield
