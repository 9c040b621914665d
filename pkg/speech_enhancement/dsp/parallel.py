"""
Frequency-block worker pool.

Per-frequency linear algebra is independent across bins, so heavy batched calls
are split into contiguous frequency blocks and run on a thread pool (numpy's
batched linalg releases the GIL). Blocks are concatenated in frequency order and
each matrix is processed by the same LAPACK call regardless of the split, so
results do not depend on the thread count.
"""

import contextlib
import contextvars
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_THREADS = contextvars.ContextVar('speech_enhancement_threads', default=1)


def current_threads():
    return _THREADS.get()


@contextlib.contextmanager
def worker_threads(count):
    """Run the enclosed block with ``count`` frequency workers"""
    token = _THREADS.set(max(1, int(count)))
    try:
        yield
    finally:
        _THREADS.reset(token)


def frequency_map(func, *arrays):
    """
    Apply ``func`` to matching frequency blocks of ``arrays`` (axis 0).

    ``func`` may return an array or a tuple of arrays; outputs are concatenated
    along axis 0 in block order.
    """
    threads = current_threads()
    n_freq = arrays[0].shape[0]
    if threads <= 1 or n_freq < 2:
        return func(*arrays)

    bounds = np.linspace(0, n_freq, min(threads, n_freq) + 1).astype(int)
    blocks = [tuple(a[lo:hi] for a in arrays) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
        results = list(pool.map(lambda block: func(*block), blocks))

    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts, axis=0) for parts in zip(*results))
    return np.concatenate(results, axis=0)
