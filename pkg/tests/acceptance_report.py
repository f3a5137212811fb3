"""Collects one verdict per acceptance criterion for the terminal summary."""

import contextlib
import time

RESULTS: dict[int, tuple[str, str, str]] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS when the block finishes, FAIL with the reason otherwise.

    The block may append to the yielded list to add detail to the line.
    """
    detail: list[str] = []
    start = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        RESULTS[number] = ("FAIL", title, "; ".join(detail + [reason]))
        raise
    elapsed = time.perf_counter() - start
    RESULTS[number] = ("PASS", title, "; ".join(detail + [f"{elapsed:.1f}s"]))


def lines() -> list[str]:
    return [f"criterion {n:2d} {verdict}: {title} ({info})"
            for n, (verdict, title, info) in sorted(RESULTS.items())]
