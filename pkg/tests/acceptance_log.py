"""Collects one verdict per acceptance criterion for the end-of-run summary."""
from contextlib import contextmanager
import time

RESULTS: dict[int, tuple[bool, str]] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record PASS when the block finishes, FAIL (with the message) when it raises."""
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        RESULTS[number] = (False, f"{title} [{time.perf_counter() - start:.1f}s] {msg}")
        raise
    RESULTS[number] = (True, f"{title} [{time.perf_counter() - start:.1f}s]")


def lines() -> list[str]:
    return [f"ACCEPT {n:2d} {'PASS' if ok else 'FAIL'}: {text}" for n, (ok, text) in sorted(RESULTS.items())]
